use std::io::Write;
use std::str::FromStr;

use super::parse_err;
use crate::config::Method;
use crate::error::{Error, Result};
use crate::experiment::{aggregate, RichnessRecord, SurveyAggregate, SurveyRecord};
use crate::lyapunov::Verdict;
use crate::model::SystemParams;

pub const SPECTRUM_SCHEMA: &str = "hardball-spectrum/1";
pub const SURVEY_SCHEMA: &str = "hardball-survey/1";
pub const RICHNESS_SCHEMA: &str = "hardball-richness/1";

const SPECTRUM_COLUMNS: [&str; 3] = ["index", "lambda", "convergence_estimate"];
const SURVEY_COLUMNS: [&str; 15] = [
    "seed",
    "masses",
    "n",
    "p_sigma",
    "richness",
    "property_a",
    "dim_direct",
    "dim_cpf",
    "dim_jacobian",
    "dim_alpha",
    "equations",
    "sufficient",
    "cpf_residual",
    "error",
    "consistency_failure",
];
const RICHNESS_COLUMNS: [&str; 6] = ["seed", "n", "p_sigma", "richness", "property_a_violation", "error"];

/// A delimited table with `# key=value` metadata lines in front.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    /// Each row with the line it came from.
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn schema(&self) -> Option<&str> {
        self.meta.first().filter(|(k, _)| k == "schema").map(|(_, v)| v.as_str())
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| parse_err(1, format!("missing metadata key `{key}`")))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let line = self.meta.iter().position(|(k, _)| k == key).map_or(1, |p| p + 1);
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| parse_err(line, format!("bad value `{raw}` for `{key}`")))
    }

    fn expect(&self, schema: &str, columns: &[&str]) -> Result<()> {
        match self.schema() {
            Some(s) if s == schema => {}
            Some(s) => return Err(parse_err(1, format!("unknown schema `{s}`"))),
            None => return Err(parse_err(1, "first metadata line must name the schema")),
        }
        if self.columns != columns {
            return Err(parse_err(
                self.meta.len() + 1,
                format!("expected columns {}", columns.join(",")),
            ));
        }
        Ok(())
    }

    fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}")?;
        }
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        csv.write_record(&self.columns).map_err(csv_io)?;
        for (_, row) in &self.rows {
            csv.write_record(row).map_err(csv_io)?;
        }
        csv.flush()?;
        Ok(())
    }

    fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Splits the metadata block from the CSV body and parses both.
pub fn parse_table(text: &str) -> Result<Table> {
    let mut table = Table::default();
    let mut body_start = text.len();
    let mut offset = 0;
    let mut line_no = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.starts_with('#') {
            body_start = offset;
            break;
        }
        line_no += 1;
        let (k, v) = trimmed[1..]
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, "metadata lines look like `# key=value`"))?;
        table.meta.push((k.trim().to_string(), v.trim().to_string()));
        offset += line.len();
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(&text.as_bytes()[body_start..]);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(line_no + 1, e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(parse_err(line_no + 1, "missing column header"));
    }
    table.columns = headers.iter().map(str::to_string).collect();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(line_no + 1, |p| line_no + p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = line_no + rec.position().map_or(0, |p| p.line() as usize);
        table.rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(table)
}

fn cell<T: FromStr>(row: &(usize, Vec<String>), col: usize, name: &str) -> Result<T> {
    let raw = &row.1[col];
    raw.parse()
        .map_err(|_| parse_err(row.0, format!("bad value `{raw}` in column `{name}`")))
}

fn opt_cell<T: FromStr>(row: &(usize, Vec<String>), col: usize, name: &str) -> Result<Option<T>> {
    if row.1[col].is_empty() {
        Ok(None)
    } else {
        cell(row, col, name).map(Some)
    }
}

/// Shortest round-trip form, switching to exponent notation for very small
/// and very large magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn nums(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";")
}

fn opt_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

fn split<T: FromStr>(raw: &str, line: usize, what: &str) -> Result<Vec<T>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(';')
        .map(|s| s.trim().parse().map_err(|_| parse_err(line, format!("bad entry `{s}` in {what}"))))
        .collect()
}

fn parse_verdict(s: &str) -> Option<Verdict> {
    match s {
        "pass" => Some(Verdict::Pass),
        "fail" => Some(Verdict::Fail),
        "inconclusive" => Some(Verdict::Inconclusive),
        "unavailable" => Some(Verdict::Unavailable),
        _ => None,
    }
}

fn push_params(t: &mut Table, p: &SystemParams) {
    t.push_meta("n_balls", p.n_balls);
    t.push_meta("dim", p.dim);
    t.push_meta("torus_side", num(p.torus_side));
    t.push_meta("radius", num(p.radius));
    t.push_meta("masses", nums(&p.masses));
}

fn read_params(t: &Table) -> Result<SystemParams> {
    let masses = split(t.get("masses")?, 1, "masses")?;
    let mut p = SystemParams::new(
        t.parse("n_balls")?,
        t.parse("dim")?,
        t.parse("torus_side")?,
        t.parse("radius")?,
        masses,
    );
    p.allow_zero_mass = p.masses.contains(&0.0);
    p.validate().map_err(|e| parse_err(1, e.to_string()))?;
    Ok(p)
}

/// A Lyapunov spectrum with its run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub params: SystemParams,
    pub seed: u64,
    pub total_time: f64,
    pub renorm_every: usize,
    pub collisions: usize,
    pub tol_zero: f64,
    pub verdict: Verdict,
    /// Descending.
    pub exponents: Vec<f64>,
    pub convergence: Vec<f64>,
}

pub fn write_spectrum<W: Write>(w: W, s: &SpectrumTable) -> Result<()> {
    let mut t = Table::default();
    t.push_meta("schema", SPECTRUM_SCHEMA);
    push_params(&mut t, &s.params);
    t.push_meta("seed", s.seed);
    t.push_meta("total_time", num(s.total_time));
    t.push_meta("renorm_every", s.renorm_every);
    t.push_meta("frame_size", s.exponents.len());
    t.push_meta("collisions", s.collisions);
    t.push_meta("tol_zero", num(s.tol_zero));
    t.push_meta("verdict", s.verdict);
    t.columns = SPECTRUM_COLUMNS.iter().map(|c| c.to_string()).collect();
    for (k, (l, c)) in s.exponents.iter().zip(&s.convergence).enumerate() {
        t.rows.push((0, vec![(k + 1).to_string(), num(*l), num(*c)]));
    }
    t.write(w)
}

pub fn parse_spectrum(text: &str) -> Result<SpectrumTable> {
    let t = parse_table(text)?;
    t.expect(SPECTRUM_SCHEMA, &SPECTRUM_COLUMNS)?;
    let params = read_params(&t)?;
    let frame_size: usize = t.parse("frame_size")?;
    let verdict_raw = t.get("verdict")?;
    let verdict = parse_verdict(verdict_raw).ok_or_else(|| parse_err(1, format!("unknown verdict `{verdict_raw}`")))?;
    let mut exponents = Vec::with_capacity(t.rows.len());
    let mut convergence = Vec::with_capacity(t.rows.len());
    for (k, row) in t.rows.iter().enumerate() {
        let index: usize = cell(row, 0, "index")?;
        if index != k + 1 {
            return Err(parse_err(row.0, format!("expected index {}, found {index}", k + 1)));
        }
        let lambda: f64 = cell(row, 1, "lambda")?;
        if exponents.last().is_some_and(|&prev: &f64| lambda > prev) {
            return Err(parse_err(row.0, "exponents must be descending"));
        }
        exponents.push(lambda);
        convergence.push(cell(row, 2, "convergence_estimate")?);
    }
    if exponents.len() != frame_size {
        return Err(parse_err(1, format!("frame_size {frame_size} but {} rows", exponents.len())));
    }
    Ok(SpectrumTable {
        params,
        seed: t.parse("seed")?,
        total_time: t.parse("total_time")?,
        renorm_every: t.parse("renorm_every")?,
        collisions: t.parse("collisions")?,
        tol_zero: t.parse("tol_zero")?,
        verdict,
        exponents,
        convergence,
    })
}

/// Per-seed sufficiency records with the ensemble totals.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyTable {
    pub n_balls: usize,
    pub dim: usize,
    pub torus_side: f64,
    pub radius: f64,
    pub segment_length: usize,
    pub methods: Vec<Method>,
    pub rank_tol: f64,
    pub aggregate: SurveyAggregate,
    pub records: Vec<SurveyRecord>,
}

pub fn write_survey<W: Write>(w: W, s: &SurveyTable) -> Result<()> {
    let a = &s.aggregate;
    let mut t = Table::default();
    t.push_meta("schema", SURVEY_SCHEMA);
    t.push_meta("n_balls", s.n_balls);
    t.push_meta("dim", s.dim);
    t.push_meta("torus_side", num(s.torus_side));
    t.push_meta("radius", num(s.radius));
    t.push_meta("segment_length", s.segment_length);
    t.push_meta("methods", s.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(";"));
    t.push_meta("rank_tol", num(s.rank_tol));
    t.push_meta("min_richness", a.min_richness);
    t.push_meta("segments", a.segments);
    t.push_meta("failures", a.failures);
    t.push_meta("rich", a.rich);
    t.push_meta("rich_sufficient", a.rich_sufficient);
    t.push_meta("rich_not_sufficient", join(&a.rich_not_sufficient));
    t.push_meta("tainted", a.tainted);
    t.columns = SURVEY_COLUMNS.iter().map(|c| c.to_string()).collect();
    for r in &s.records {
        t.rows.push((
            0,
            vec![
                r.seed.to_string(),
                nums(&r.masses),
                r.n.to_string(),
                r.p_sigma.to_string(),
                r.richness.to_string(),
                r.property_a.to_string(),
                opt_string(&r.dim_direct),
                opt_string(&r.dim_cpf),
                opt_string(&r.dim_jacobian),
                opt_string(&r.dim_alpha),
                opt_string(&r.equations),
                opt_string(&r.sufficient),
                r.cpf_residual.map(num).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
                r.consistency_failure.to_string(),
            ],
        ));
    }
    t.write(w)
}

/// Parses a survey table; the totals in the metadata must agree with the
/// records.
pub fn parse_survey(text: &str) -> Result<SurveyTable> {
    let t = parse_table(text)?;
    t.expect(SURVEY_SCHEMA, &SURVEY_COLUMNS)?;
    let methods: Vec<Method> = split(t.get("methods")?, 1, "methods")?;
    let mut records = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        let error = &row.1[13];
        records.push(SurveyRecord {
            seed: cell(row, 0, "seed")?,
            masses: split(&row.1[1], row.0, "masses")?,
            n: cell(row, 2, "n")?,
            p_sigma: cell(row, 3, "p_sigma")?,
            richness: cell(row, 4, "richness")?,
            property_a: cell(row, 5, "property_a")?,
            dim_direct: opt_cell(row, 6, "dim_direct")?,
            dim_cpf: opt_cell(row, 7, "dim_cpf")?,
            dim_jacobian: opt_cell(row, 8, "dim_jacobian")?,
            dim_alpha: opt_cell(row, 9, "dim_alpha")?,
            equations: opt_cell(row, 10, "equations")?,
            sufficient: opt_cell(row, 11, "sufficient")?,
            cpf_residual: opt_cell(row, 12, "cpf_residual")?,
            error: (!error.is_empty()).then(|| error.clone()),
            consistency_failure: cell(row, 14, "consistency_failure")?,
        });
    }
    let min_richness: usize = t.parse("min_richness")?;
    let agg = SurveyAggregate {
        segments: t.parse("segments")?,
        failures: t.parse("failures")?,
        min_richness,
        rich: t.parse("rich")?,
        rich_sufficient: t.parse("rich_sufficient")?,
        rich_not_sufficient: split(t.get("rich_not_sufficient")?, 1, "rich_not_sufficient")?,
        tainted: t.parse("tainted")?,
    };
    if aggregate(&records, min_richness) != agg {
        return Err(parse_err(1, "survey totals do not match the records"));
    }
    Ok(SurveyTable {
        n_balls: t.parse("n_balls")?,
        dim: t.parse("dim")?,
        torus_side: t.parse("torus_side")?,
        radius: t.parse("radius")?,
        segment_length: t.parse("segment_length")?,
        methods,
        rank_tol: t.parse("rank_tol")?,
        aggregate: agg,
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RichnessTable {
    pub n_balls: usize,
    pub dim: usize,
    pub segment_length: usize,
    pub required_richness: usize,
    pub records: Vec<RichnessRecord>,
}

pub fn write_richness<W: Write>(w: W, s: &RichnessTable) -> Result<()> {
    let mut t = Table::default();
    t.push_meta("schema", RICHNESS_SCHEMA);
    t.push_meta("n_balls", s.n_balls);
    t.push_meta("dim", s.dim);
    t.push_meta("segment_length", s.segment_length);
    t.push_meta("required_richness", s.required_richness);
    t.columns = RICHNESS_COLUMNS.iter().map(|c| c.to_string()).collect();
    for r in &s.records {
        t.rows.push((
            0,
            vec![
                r.seed.to_string(),
                r.n.to_string(),
                r.p_sigma.to_string(),
                r.richness.to_string(),
                r.property_a_violation.map(|(k, l)| format!("{k}:{l}")).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ],
        ));
    }
    t.write(w)
}

pub fn parse_richness(text: &str) -> Result<RichnessTable> {
    let t = parse_table(text)?;
    t.expect(RICHNESS_SCHEMA, &RICHNESS_COLUMNS)?;
    let mut records = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        let violation = match row.1[4].split_once(':') {
            None if row.1[4].is_empty() => None,
            Some((k, l)) => match (k.parse(), l.parse()) {
                (Ok(k), Ok(l)) => Some((k, l)),
                _ => return Err(parse_err(row.0, format!("bad violation `{}`", row.1[4]))),
            },
            None => return Err(parse_err(row.0, format!("bad violation `{}`", row.1[4]))),
        };
        let error = &row.1[5];
        records.push(RichnessRecord {
            seed: cell(row, 0, "seed")?,
            n: cell(row, 1, "n")?,
            p_sigma: cell(row, 2, "p_sigma")?,
            richness: cell(row, 3, "richness")?,
            property_a_violation: violation,
            error: (!error.is_empty()).then(|| error.clone()),
        });
    }
    Ok(RichnessTable {
        n_balls: t.parse("n_balls")?,
        dim: t.parse("dim")?,
        segment_length: t.parse("segment_length")?,
        required_richness: t.parse("required_richness")?,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum() -> SpectrumTable {
        SpectrumTable {
            params: SystemParams::new(2, 2, 1.0, 0.15, vec![1.0, 2.3]),
            seed: 11,
            total_time: 1e4,
            renorm_every: 10,
            collisions: 10247,
            tol_zero: 0.1216952101490116,
            verdict: Verdict::Pass,
            exponents: vec![2.43, 1e-3, 0.0, -0.0, -1e-3, -1e-3, -2e-3, -2.43],
            convergence: vec![0.01, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, f64::INFINITY],
        }
    }

    fn to_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn spectrum_round_trip() {
        let s = spectrum();
        let text = to_string(|b| write_spectrum(b, &s));
        assert!(text.starts_with("# schema=hardball-spectrum/1\n"));
        assert_eq!(parse_spectrum(&text).unwrap(), s);
    }

    #[test]
    fn spectrum_rejects_unknown_schema_and_short_frames() {
        let text = to_string(|b| write_spectrum(b, &spectrum()));
        assert!(parse_spectrum(&text.replace("spectrum/1", "spectrum/2")).is_err());
        let cut: Vec<&str> = text.lines().take(text.lines().count() - 1).collect();
        assert!(parse_spectrum(&cut.join("\n")).is_err());
        assert!(parse_spectrum("").is_err());
    }

    #[test]
    fn survey_round_trip_and_total_check() {
        let mut rec = SurveyRecord {
            seed: 5,
            masses: vec![1.0, 0.5, 1.75],
            n: 30,
            p_sigma: 1,
            richness: 3,
            property_a: true,
            dim_direct: Some(3),
            dim_cpf: Some(3),
            dim_jacobian: None,
            dim_alpha: Some(1),
            equations: Some(28),
            sufficient: Some(true),
            cpf_residual: Some(2.5e-16),
            error: None,
            consistency_failure: false,
        };
        let mut failed = rec.clone();
        failed.seed = 6;
        failed.error = Some("tangential approach, \"quoted\"".into());
        rec.masses[0] = 0.1 + 0.2;
        let records = vec![rec, failed];
        let s = SurveyTable {
            n_balls: 3,
            dim: 2,
            torus_side: 1.0,
            radius: 0.1,
            segment_length: 30,
            methods: vec![Method::Direct, Method::Cpf],
            rank_tol: 1e-8,
            aggregate: aggregate(&records, 2),
            records,
        };
        let text = to_string(|b| write_survey(b, &s));
        assert_eq!(parse_survey(&text).unwrap(), s);
        assert!(parse_survey(&text.replace("# rich=1", "# rich=2")).is_err());
    }

    #[test]
    fn richness_round_trip() {
        let s = RichnessTable {
            n_balls: 4,
            dim: 2,
            segment_length: 50,
            required_richness: 3,
            records: vec![
                RichnessRecord {
                    seed: 0,
                    n: 50,
                    p_sigma: 1,
                    richness: 4,
                    property_a_violation: None,
                    error: None,
                },
                RichnessRecord {
                    seed: 1,
                    n: 50,
                    p_sigma: 2,
                    richness: 0,
                    property_a_violation: Some((3, 7)),
                    error: None,
                },
            ],
        };
        let text = to_string(|b| write_richness(b, &s));
        assert_eq!(parse_richness(&text).unwrap(), s);
    }
}
