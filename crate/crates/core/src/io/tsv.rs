//! Tab-separated formats for alignments and duration models.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::align::{Alignment, Span};
use crate::duration::{DurationModel, DurationStats, GLOBAL_KEY};
use crate::error::{Error, Result};

const ALIGNMENT_HEADER: &str = "phone\tstart_frame\tend_frame";
const DURATION_HEADER: &str = "phone\tmean_ms\tstd_ms\tcount";

fn fields<'a>(line: &'a str, n: usize, lineno: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != n {
        return Err(Error::Validation {
            line: lineno,
            message: format!("expected {n} tab-separated fields, found {}", f.len()),
        });
    }
    Ok(f)
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Validation {
        line,
        message: format!("cannot parse {what} from {s:?}"),
    })
}

fn check_header(first: Option<&str>, header: &str) -> Result<()> {
    match first {
        Some(h) if h.trim_end_matches('\r') == header => Ok(()),
        Some(h) => Err(Error::Validation {
            line: 1,
            message: format!("expected header {header:?}, found {h:?}"),
        }),
        None => Err(Error::Validation {
            line: 1,
            message: "empty file".into(),
        }),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty())
}

pub fn format_alignment(alignment: &Alignment) -> String {
    let mut out = format!("{ALIGNMENT_HEADER}\n");
    for s in alignment.spans() {
        out.push_str(&format!("{}\t{}\t{}\n", s.phone, s.start, s.end));
    }
    out
}

pub fn parse_alignment(text: &str) -> Result<Alignment> {
    check_header(text.lines().next(), ALIGNMENT_HEADER)?;
    let mut spans = Vec::new();
    for (line, l) in data_lines(text) {
        let f = fields(l, 3, line)?;
        spans.push(Span {
            phone: f[0].to_string(),
            start: parse_field(f[1], "start_frame", line)?,
            end: parse_field(f[2], "end_frame", line)?,
        });
    }
    Alignment::new(spans)
}

pub fn format_duration_model(model: &DurationModel) -> String {
    let mut out = format!("{DURATION_HEADER}\n");
    let row = |name: &str, s: &DurationStats| {
        format!("{name}\t{}\t{}\t{}\n", s.mean_ms, s.std_ms, s.count)
    };
    for (p, s) in &model.phones {
        out.push_str(&row(p, s));
    }
    if let Some(g) = &model.global {
        out.push_str(&row(GLOBAL_KEY, g));
    }
    out
}

pub fn parse_duration_model(text: &str) -> Result<DurationModel> {
    check_header(text.lines().next(), DURATION_HEADER)?;
    let mut phones = BTreeMap::new();
    let mut global = None;
    for (line, l) in data_lines(text) {
        let f = fields(l, 4, line)?;
        let stats = DurationStats {
            mean_ms: parse_field(f[1], "mean_ms", line)?,
            std_ms: parse_field(f[2], "std_ms", line)?,
            count: parse_field(f[3], "count", line)?,
        };
        if !(stats.mean_ms.is_finite() && stats.std_ms.is_finite() && stats.std_ms > 0.0) {
            return Err(Error::Validation {
                line,
                message: "mean and std must be finite with std > 0".into(),
            });
        }
        if f[0] == GLOBAL_KEY {
            global = Some(stats);
        } else {
            crate::inventory::index_of(f[0]).map_err(|_| Error::Validation {
                line,
                message: format!("unknown phoneme symbol {:?}", f[0]),
            })?;
            phones.insert(f[0].to_string(), stats);
        }
    }
    Ok(DurationModel { phones, global })
}

pub fn read_alignment(path: impl AsRef<Path>) -> Result<Alignment> {
    let path = path.as_ref();
    parse_alignment(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_alignment(path: impl AsRef<Path>, alignment: &Alignment) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_alignment(alignment)).map_err(|e| Error::io(path, e))
}

pub fn read_duration_model(path: impl AsRef<Path>) -> Result<DurationModel> {
    let path = path.as_ref();
    parse_duration_model(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_duration_model(path: impl AsRef<Path>, model: &DurationModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_duration_model(model)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::SYMBOLS;
    use proptest::prelude::*;

    #[test]
    fn alignment_header_required() {
        assert!(parse_alignment("phone\tstart\tend\nAA\t0\t0\n").is_err());
        let al = parse_alignment("phone\tstart_frame\tend_frame\nAA\t0\t3\nB\t4\t4\n").unwrap();
        assert_eq!(al.num_frames(), 5);
    }

    #[test]
    fn duration_file_has_global_row() {
        let m = crate::duration::fit_durations([("AA", 90.0), ("AA", 110.0)]).unwrap();
        let text = format_duration_model(&m);
        assert!(text.starts_with("phone\tmean_ms\tstd_ms\tcount\n"));
        assert!(text.lines().any(|l| l.starts_with("__GLOBAL__\t")));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn alignment_round_trip(runs in prop::collection::vec((0usize..41, 1usize..30), 1..12)) {
            let mut start = 0;
            let spans = runs.iter().map(|&(p, len)| {
                let s = Span { phone: SYMBOLS[p].to_string(), start, end: start + len - 1 };
                start += len;
                s
            }).collect();
            let al = Alignment::new(spans).unwrap();
            prop_assert_eq!(parse_alignment(&format_alignment(&al)).unwrap(), al);
        }

        #[test]
        fn duration_model_round_trip(
            rows in prop::collection::btree_map(0usize..41, (1e-3f64..1e4, 5.0f64..1e3, 0usize..10_000), 0..20),
            global in (1e-3f64..1e4, 5.0f64..1e3, 1usize..10_000),
        ) {
            let model = DurationModel {
                phones: rows.iter().map(|(&p, &(m, s, c))| {
                    (SYMBOLS[p].to_string(), DurationStats { mean_ms: m, std_ms: s, count: c })
                }).collect(),
                global: Some(DurationStats { mean_ms: global.0, std_ms: global.1, count: global.2 }),
            };
            prop_assert_eq!(parse_duration_model(&format_duration_model(&model)).unwrap(), model);
        }
    }
}
