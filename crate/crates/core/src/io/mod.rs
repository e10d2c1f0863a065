//! File formats written by the command-line front end, with their parsers.
//!
//! * events: JSON lines; a header record, one record per collision, and a
//!   trailer with the final state;
//! * summary: one JSON object;
//! * spectrum, survey and richness tables: CSV preceded by `# key=value`
//!   metadata lines, the first of which names the schema.
//!
//! Floats are written in shortest round-trip form. Every parser rejects
//! schemas it does not know.

mod events;
mod summary;
mod tables;

pub use events::{parse_events, write_events, EVENTS_SCHEMA};
pub use summary::{parse_summary, write_summary, LyapunovSummary, Summary, SUMMARY_SCHEMA};
pub use tables::{
    parse_richness, parse_spectrum, parse_survey, parse_table, write_richness, write_spectrum, write_survey,
    RichnessTable, SpectrumTable, SurveyTable, Table, RICHNESS_SCHEMA, SPECTRUM_SCHEMA, SURVEY_SCHEMA,
};

use crate::error::Error;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}
