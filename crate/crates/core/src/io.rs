//! Trajectory files: canonical JSON and a flat CSV export.
//!
//! Numbers are written with 17 significant digits, so a file read back and
//! written again is byte-identical.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{
    AdjointState, Configuration, Control, ExitReason, ExtremalConstants, Line, MergeBranch, MergeInfo, Segment,
    SegmentKind, SwitchingValues, Trajectory, TrajectorySample,
};

pub const FORMAT_VERSION: &str = "1";

/// Per-sample fields, in file order.
pub const SAMPLE_FIELDS: [&str; 14] =
    ["t", "x", "y", "theta", "beta", "v", "omega", "lx", "ly", "ltheta", "lbeta", "phi_v", "phi_omega", "H"];

fn num(out: &mut String, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Format(format!("cannot serialize non-finite number {x}")));
    }
    write!(out, "{x:.16e}").expect("write to string");
    Ok(())
}

fn sample_row(s: &TrajectorySample) -> [f64; 14] {
    [
        s.t,
        s.q.x,
        s.q.y,
        s.q.theta,
        s.q.beta,
        s.u.v,
        s.u.omega,
        s.lambda.lx,
        s.lambda.ly,
        s.lambda.ltheta,
        s.lambda.lbeta,
        s.sw.phi_v,
        s.sw.phi_omega,
        s.h,
    ]
}

fn constants_json(out: &mut String, c: &ExtremalConstants) -> Result<()> {
    out.push_str("{\"c1\": ");
    num(out, c.c1)?;
    out.push_str(", \"c2\": ");
    num(out, c.c2)?;
    out.push_str(", \"c3\": ");
    num(out, c.c3)?;
    out.push_str(", \"c4\": ");
    num(out, c.c4)?;
    out.push('}');
    Ok(())
}

/// Serializes a trajectory to the canonical JSON format.
pub fn to_json(traj: &Trajectory) -> Result<String> {
    let mut o = String::new();
    o.push_str("{\n  \"format_version\": \"1\",\n  \"constants\": ");
    constants_json(&mut o, &traj.constants)?;
    let _ = write!(o, ",\n  \"truncated\": {},\n  \"sample_fields\": [", traj.truncated);
    for (i, f) in SAMPLE_FIELDS.iter().enumerate() {
        if i > 0 {
            o.push_str(", ");
        }
        let _ = write!(o, "\"{f}\"");
    }
    o.push_str("],\n  \"segments\": [");
    for (i, seg) in traj.segments.iter().enumerate() {
        o.push_str(if i == 0 { "\n    {" } else { ",\n    {" });
        let _ = write!(o, "\"kind\": \"{}\", \"exit\": \"{}\", \"t_start\": ", seg.kind.name(), seg.exit.name());
        num(&mut o, seg.t_start)?;
        o.push_str(", \"t_end\": ");
        num(&mut o, seg.t_end)?;
        o.push_str(",\n      \"constants\": ");
        constants_json(&mut o, &seg.constants)?;
        let _ = write!(o, ", \"reseeded\": {}, \"joint_snap\": ", seg.reseeded);
        match seg.joint_snap {
            Some(x) => num(&mut o, x)?,
            None => o.push_str("null"),
        }
        o.push_str(", \"merge\": ");
        match &seg.merge {
            Some(m) => {
                o.push_str("{\"frame\": [");
                num(&mut o, m.frame.c1)?;
                o.push_str(", ");
                num(&mut o, m.frame.c2)?;
                o.push_str(", ");
                num(&mut o, m.frame.c3)?;
                o.push_str("], \"sigma\": ");
                num(&mut o, m.branch.sigma)?;
                o.push('}');
            }
            None => o.push_str("null"),
        }
        o.push_str(",\n      \"samples\": [");
        for (k, s) in seg.samples.iter().enumerate() {
            o.push_str(if k == 0 { "\n        [" } else { ",\n        [" });
            for (j, x) in sample_row(s).iter().enumerate() {
                if j > 0 {
                    o.push_str(", ");
                }
                num(&mut o, *x)?;
            }
            o.push(']');
        }
        o.push_str("\n      ]}");
    }
    o.push_str(if traj.segments.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
    Ok(o)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
}

impl From<RawConstants> for ExtremalConstants {
    fn from(r: RawConstants) -> Self {
        ExtremalConstants::new(r.c1, r.c2, r.c3, r.c4)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMerge {
    frame: [f64; 3],
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    kind: String,
    exit: String,
    t_start: f64,
    t_end: f64,
    constants: RawConstants,
    #[serde(default)]
    reseeded: bool,
    #[serde(default)]
    joint_snap: Option<f64>,
    #[serde(default)]
    merge: Option<RawMerge>,
    samples: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    format_version: String,
    constants: RawConstants,
    #[serde(default)]
    truncated: bool,
    sample_fields: Vec<String>,
    segments: Vec<RawSegment>,
}

/// Parses the canonical JSON format. Switching values and `H` are taken from
/// the file as written.
pub fn from_json(text: &str) -> Result<Trajectory> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if raw.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format_version {:?}", raw.format_version)));
    }
    if raw.sample_fields != SAMPLE_FIELDS {
        return Err(Error::Format(format!("sample_fields must be {SAMPLE_FIELDS:?}")));
    }
    let mut segments = Vec::with_capacity(raw.segments.len());
    for (i, rs) in raw.segments.into_iter().enumerate() {
        let kind = SegmentKind::from_name(&rs.kind)
            .ok_or_else(|| Error::Format(format!("segment {i}: unknown kind {:?}", rs.kind)))?;
        let exit = ExitReason::from_name(&rs.exit)
            .ok_or_else(|| Error::Format(format!("segment {i}: unknown exit reason {:?}", rs.exit)))?;
        let mut samples = Vec::with_capacity(rs.samples.len());
        for (k, row) in rs.samples.iter().enumerate() {
            let r: [f64; 14] = row
                .as_slice()
                .try_into()
                .map_err(|_| Error::Format(format!("segment {i}, sample {k}: expected 14 numbers, got {}", row.len())))?;
            samples.push(TrajectorySample {
                t: r[0],
                q: Configuration::new(r[1], r[2], r[3], r[4]),
                u: Control::new(r[5], r[6]),
                lambda: AdjointState::new(r[7], r[8], r[9], r[10]),
                sw: SwitchingValues { phi_v: r[11], phi_omega: r[12] },
                h: r[13],
            });
        }
        let merge = match rs.merge {
            Some(m) => Some(MergeInfo {
                frame: Line::new(m.frame[0], m.frame[1], m.frame[2])
                    .map_err(|e| Error::Format(format!("segment {i}: {e}")))?,
                branch: MergeBranch::new(m.sigma).map_err(|e| Error::Format(format!("segment {i}: {e}")))?,
            }),
            None => None,
        };
        segments.push(Segment {
            kind,
            t_start: rs.t_start,
            t_end: rs.t_end,
            samples,
            exit,
            constants: rs.constants.into(),
            reseeded: rs.reseeded,
            joint_snap: rs.joint_snap,
            merge,
        });
    }
    Ok(Trajectory { constants: raw.constants.into(), segments, truncated: raw.truncated })
}

/// Flat CSV export: a `# format-version: 1` line, a header, one row per sample.
pub fn to_csv(traj: &Trajectory) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SAMPLE_FIELDS).map_err(|e| Error::Format(e.to_string()))?;
    for s in traj.samples() {
        let mut cells = Vec::with_capacity(14);
        for x in sample_row(s) {
            let mut c = String::new();
            num(&mut c, x)?;
            cells.push(c);
        }
        w.write_record(&cells).map_err(|e| Error::Format(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("# format-version: {FORMAT_VERSION}\n{body}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::{simulate_extremal, SimulateOptions};

    fn sample_traj() -> Trajectory {
        simulate_extremal(
            &Configuration::new(0.1, -0.2, 0.3, 0.4),
            &AdjointState::new(1.0, 0.0, 0.5, 0.2),
            2.5,
            &SimulateOptions { h: 1e-2, ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let traj = sample_traj();
        let a = to_json(&traj).unwrap();
        let back = from_json(&a).unwrap();
        assert_eq!(back, traj);
        assert_eq!(to_json(&back).unwrap(), a);
    }

    #[test]
    fn empty_trajectory() {
        let t = Trajectory::default();
        let a = to_json(&t).unwrap();
        assert_eq!(from_json(&a).unwrap(), t);
    }

    #[test]
    fn malformed_files() {
        let a = to_json(&sample_traj()).unwrap();
        assert!(matches!(from_json(&a[..a.len() / 2]), Err(Error::Format(_))));
        assert!(from_json(&a.replace("\"format_version\": \"1\"", "\"format_version\": \"9\"")).is_err());
        assert!(from_json(&a.replace("regular_fl", "regular_xx")).is_err());
    }

    #[test]
    fn csv_header() {
        let csv = to_csv(&sample_traj()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# format-version: 1"));
        assert_eq!(lines.next(), Some("t,x,y,theta,beta,v,omega,lx,ly,ltheta,lbeta,phi_v,phi_omega,H"));
        assert_eq!(lines.next().unwrap().split(',').count(), 14);
    }
}
