use std::io::Write;

use serde::{Deserialize, Serialize};

use super::parse_err;
use crate::dynamics::{CollisionEvent, OrbitSegment};
use crate::error::Result;
use crate::model::{PhaseState, SystemParams};

pub const EVENTS_SCHEMA: &str = "hardball-events/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    params: SystemParams,
    initial: PhaseState,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    index: usize,
    time: f64,
    pair: (usize, usize),
    image: Vec<i64>,
    pre: Vec<f64>,
    post: Vec<f64>,
    normal: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Trailer {
    #[serde(rename = "final")]
    final_state: PhaseState,
}

pub fn write_events<W: Write>(mut w: W, segment: &OrbitSegment) -> Result<()> {
    let header = Header {
        schema: EVENTS_SCHEMA.to_string(),
        params: segment.params.clone(),
        initial: segment.initial.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for e in &segment.events {
        let rec = EventRecord {
            index: e.index,
            time: e.time,
            pair: e.pair,
            image: e.image.clone(),
            pre: e.pre_velocities.clone(),
            post: e.post_velocities.clone(),
            normal: e.normal.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("event serializes"))?;
    }
    let trailer = Trailer {
        final_state: segment.final_state.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&trailer).expect("trailer serializes"))?;
    Ok(())
}

/// Reads an event log back into a segment. Structure is checked (schema,
/// lengths, indices, ordering); physics is not.
pub fn parse_events(text: &str) -> Result<OrbitSegment> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty event log"))?;
    let header: Header = serde_json::from_str(first).map_err(|e| parse_err(1, e.to_string()))?;
    if header.schema != EVENTS_SCHEMA {
        return Err(parse_err(1, format!("unknown schema `{}`", header.schema)));
    }
    let params = header.params;
    params.validate().map_err(|e| parse_err(1, e.to_string()))?;
    let coords = params
        .n_balls
        .checked_mul(params.dim)
        .ok_or_else(|| parse_err(1, "system too large"))?;
    check_state(&header.initial, coords, 1)?;

    let mut events: Vec<CollisionEvent> = Vec::new();
    let mut final_state = None;
    let mut last_time = header.initial.time;
    for (k, line) in lines {
        let lineno = k + 1;
        if final_state.is_some() {
            return Err(parse_err(lineno, "record after the final state"));
        }
        if let Ok(t) = serde_json::from_str::<Trailer>(line) {
            check_state(&t.final_state, coords, lineno)?;
            final_state = Some(t.final_state);
            continue;
        }
        let rec: EventRecord = serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if rec.index != events.len() + 1 {
            return Err(parse_err(lineno, format!("expected event {}, found {}", events.len() + 1, rec.index)));
        }
        let (i, j) = rec.pair;
        if !(i < j && j < params.n_balls) {
            return Err(parse_err(lineno, format!("invalid pair ({i}, {j})")));
        }
        if rec.image.len() != params.dim || rec.normal.len() != params.dim {
            return Err(parse_err(lineno, "image and normal need one entry per dimension"));
        }
        if rec.pre.len() != coords || rec.post.len() != coords {
            return Err(parse_err(lineno, format!("velocity records need {coords} entries")));
        }
        if !(rec.time.is_finite() && rec.time >= last_time) {
            return Err(parse_err(lineno, format!("event time {} precedes {last_time}", rec.time)));
        }
        last_time = rec.time;
        events.push(CollisionEvent {
            index: rec.index,
            time: rec.time,
            pair: rec.pair,
            image: rec.image,
            pre_velocities: rec.pre,
            post_velocities: rec.post,
            normal: rec.normal,
        });
    }
    let final_state = final_state.ok_or_else(|| parse_err(text.lines().count(), "missing final state"))?;
    Ok(OrbitSegment {
        params,
        initial: header.initial,
        events,
        final_state,
    })
}

fn check_state(state: &PhaseState, coords: usize, line: usize) -> Result<()> {
    if state.positions.len() != coords || state.velocities.len() != coords {
        return Err(parse_err(line, format!("states need {coords} positions and velocities")));
    }
    if !state.time.is_finite() {
        return Err(parse_err(line, "state time is not finite"));
    }
    Ok(())
}
