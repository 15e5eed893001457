//! JSON artifacts: XDD sequences, APAs and received-codeword streams.
//!
//! Numbers are written with 17 significant digits so every `f64` survives a
//! round trip through text.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::feasibility::{ActionProbs, Apa, ApaEntry};
use crate::xdd::XddSequence;

/// Sum tolerance for distributions read back from text.
pub const FILE_TOLERANCE: f64 = 1e-9;

fn num(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("writing to a String");
}

pub fn xdd_sequence_to_json(seq: &XddSequence<f64>) -> String {
    let mut s = format!("{{\"K\": {}, \"mu\": [", seq.diameter());
    for (i, x) in seq.iter().enumerate() {
        s.push_str(if i == 0 { "\n  [" } else { ",\n  [" });
        for (d, m) in x.masses().iter().enumerate() {
            if d > 0 {
                s.push_str(", ");
            }
            num(&mut s, *m);
        }
        s.push(']');
    }
    s.push_str("\n]}\n");
    s
}

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a serde_json::Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::Format(format!("{what} must be a JSON object")))
}

fn diameter_field(obj: &serde_json::Map<String, Value>) -> Result<usize> {
    obj.get("K")
        .and_then(Value::as_u64)
        .map(|k| k as usize)
        .ok_or_else(|| Error::Format("missing or non-integer \"K\"".into()))
}

fn number(v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::Format(format!("expected a number, found {v}")))
}

pub fn xdd_sequence_from_json(text: &str) -> Result<XddSequence<f64>> {
    let v: Value = serde_json::from_str(text)?;
    let obj = as_object(&v, "XDD sequence")?;
    let k = diameter_field(obj)?;
    let rows = obj
        .get("mu")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Format("missing \"mu\" array".into()))?;
    if rows.len() != k {
        return Err(Error::MalformedSequence(format!("K = {k} but {} rows", rows.len())));
    }
    let masses = rows
        .iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| Error::Format("each mu row must be an array".into()))?
                .iter()
                .map(number)
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    XddSequence::from_masses_with_tolerance(masses, &FILE_TOLERANCE)
}

/// `p[i-1]` lists the `(pA, pS, pR)` triples of hop `i`; `null` marks an
/// unreachable cell.
pub fn apa_to_json(apa: &Apa<f64>) -> String {
    let mut s = format!("{{\"K\": {}, \"p\": [", apa.diameter());
    for (i, row) in apa.rows().iter().enumerate() {
        s.push_str(if i == 0 { "\n  [" } else { ",\n  [" });
        for (d, e) in row.iter().enumerate() {
            if d > 0 {
                s.push_str(", ");
            }
            match e {
                ApaEntry::Reachable(p) => {
                    s.push('[');
                    num(&mut s, p.add);
                    s.push_str(", ");
                    num(&mut s, p.skip);
                    s.push_str(", ");
                    num(&mut s, p.replace);
                    s.push(']');
                }
                ApaEntry::Unreachable => s.push_str("null"),
            }
        }
        s.push(']');
    }
    s.push_str("\n]}\n");
    s
}

pub fn apa_from_json(text: &str) -> Result<Apa<f64>> {
    let v: Value = serde_json::from_str(text)?;
    let obj = as_object(&v, "APA")?;
    let k = diameter_field(obj)?;
    let rows = obj
        .get("p")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Format("missing \"p\" array".into()))?;
    if rows.len() != k {
        return Err(Error::MalformedSequence(format!("K = {k} but {} hops", rows.len())));
    }
    let parsed = rows
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| Error::Format("each APA hop must be an array".into()))?
                .iter()
                .map(|e| match e {
                    Value::Null => Ok(ApaEntry::Unreachable),
                    Value::Array(t) if t.len() == 3 => Ok(ApaEntry::Reachable(ActionProbs {
                        add: number(&t[0])?,
                        skip: number(&t[1])?,
                        replace: number(&t[2])?,
                    })),
                    other => Err(Error::Format(format!("bad APA entry {other}"))),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Apa::from_rows_with_tolerance(parsed, &FILE_TOLERANCE)
}

/// One delivered codeword as stored in a JSON-lines stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodewordRecord {
    pub packet_id: u64,
    pub codeword: u64,
}

pub fn write_codewords<W: Write>(records: &[CodewordRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Blank lines are skipped.
pub fn read_codewords<R: BufRead>(r: R) -> Result<Vec<CodewordRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::shifted_soliton_sequence;
    use crate::feasibility::derive_apa;
    use crate::search::random_feasible_sequence;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xdd_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in [1, 3, 17] {
            let seq = random_feasible_sequence::<f64, _>(k, &mut rng).unwrap();
            let back = xdd_sequence_from_json(&xdd_sequence_to_json(&seq)).unwrap();
            assert_eq!(back, seq);
        }
    }

    #[test]
    fn xdd_json_shape() {
        let text = xdd_sequence_to_json(&shifted_soliton_sequence(3).unwrap());
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["K"], 3);
        assert_eq!(v["mu"][2].as_array().unwrap().len(), 3);
        assert!(text.contains("1.6666666666666666e-1"));
    }

    #[test]
    fn xdd_file_tolerance() {
        let ok = r#"{"K": 2, "mu": [[1.0], [0.3333333333, 0.6666666667]]}"#;
        assert!(xdd_sequence_from_json(ok).is_ok());
        let bad = r#"{"K": 2, "mu": [[1.0], [0.4, 0.5]]}"#;
        assert!(matches!(xdd_sequence_from_json(bad), Err(Error::Validation(_))));
        let short = r#"{"K": 3, "mu": [[1.0], [0.5, 0.5]]}"#;
        assert!(xdd_sequence_from_json(short).is_err());
        assert!(xdd_sequence_from_json("[1]").is_err());
        assert!(xdd_sequence_from_json("{").is_err());
    }

    #[test]
    fn apa_round_trip_with_unreachable_cells() {
        let seq = XddSequence::from_masses(vec![vec![1.0], vec![1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let apa = derive_apa(&seq).unwrap();
        let text = apa_to_json(&apa);
        assert!(text.contains("null"));
        assert_eq!(apa_from_json(&text).unwrap(), apa);

        let apa = derive_apa(&shifted_soliton_sequence(9).unwrap()).unwrap();
        assert_eq!(apa_from_json(&apa_to_json(&apa)).unwrap(), apa);
        assert!(apa_from_json(r#"{"K": 1, "p": [[[0.5, 0, 0.5]]]}"#).is_err());
    }

    #[test]
    fn codeword_stream_round_trip() {
        let recs = vec![
            CodewordRecord { packet_id: u64::MAX, codeword: 7 },
            CodewordRecord { packet_id: 1, codeword: 0 },
        ];
        let mut buf = Vec::new();
        write_codewords(&recs, &mut buf).unwrap();
        buf.extend_from_slice(b"\n");
        assert_eq!(read_codewords(&buf[..]).unwrap(), recs);
        assert!(read_codewords(&b"{\"packet_id\": 1}\n"[..]).is_err());
    }
}
