//! Text format for point clouds.
//!
//! ```text
//! # k=2
//! x0,x1,volume,boundary,area
//! 0.5,0.25,0.01,0,
//! 1,0,0.005,1,0.1
//! ```

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::PointCloud;
use crate::error::{PimError, Result};

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PimError::io(path, e))?;
    parse_cloud(&text)
}

pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (line_no, first) = lines.by_ref().find(|(_, l)| !l.is_empty()).ok_or(PimError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let intrinsic_dim = first
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix("k="))
        .and_then(|s| s.trim().parse::<usize>().ok())
        .ok_or_else(|| PimError::Parse {
            line: line_no,
            message: "first line must be `# k=<intrinsic_dim>`".into(),
        })?;

    let mut header: Option<(usize, usize)> = None;
    let mut coords = Vec::new();
    let mut volume = Vec::new();
    let mut boundary_ids = Vec::new();
    let mut area = Vec::new();
    let mut row = 0usize;

    for (line_no, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some((dim, _)) = header else {
            header = Some((parse_header(&fields, line_no)?, line_no));
            continue;
        };
        if fields.len() != dim + 3 {
            return Err(PimError::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", dim + 3, fields.len()),
            });
        }
        row += 1;
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| PimError::Parse {
                line: line_no,
                message: format!("row {row}: invalid {what} `{s}`"),
            })
        };
        for (c, s) in fields[..dim].iter().enumerate() {
            coords.push(num(s, &format!("coordinate x{c}"))?);
        }
        let v = num(fields[dim], "volume")?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(PimError::Validation(format!(
                "row {row} (line {line_no}): volume weight {v} must be positive"
            )));
        }
        volume.push(v);
        match fields[dim + 1] {
            "0" => {}
            "1" => {
                if fields[dim + 2].is_empty() {
                    return Err(PimError::Validation(format!(
                        "row {row} (line {line_no}): boundary point without area weight"
                    )));
                }
                let a = num(fields[dim + 2], "area")?;
                if !(a > 0.0 && a.is_finite()) {
                    return Err(PimError::Validation(format!(
                        "row {row} (line {line_no}): area weight {a} must be positive"
                    )));
                }
                boundary_ids.push(row - 1);
                area.push(a);
            }
            other => {
                return Err(PimError::Parse {
                    line: line_no,
                    message: format!("row {row}: boundary flag must be 0 or 1, found `{other}`"),
                })
            }
        }
    }

    let Some((dim, _)) = header else {
        return Err(PimError::Parse {
            line: line_no,
            message: "missing header line".into(),
        });
    };
    PointCloud::new(dim, intrinsic_dim, coords, volume, boundary_ids, area)
}

fn parse_header(fields: &[&str], line: usize) -> Result<usize> {
    let bad = |message: String| PimError::Parse { line, message };
    if fields.len() < 4 {
        return Err(bad("header needs at least one coordinate column".into()));
    }
    let dim = fields.len() - 3;
    for (c, name) in fields[..dim].iter().enumerate() {
        if *name != format!("x{c}") {
            return Err(bad(format!("header column {c} should be `x{c}`, found `{name}`")));
        }
    }
    if fields[dim..] != ["volume", "boundary", "area"] {
        return Err(bad("header must end with `volume,boundary,area`".into()));
    }
    Ok(dim)
}

/// Serializes the cloud; `comments` are emitted as `# ...` lines after the `# k=` line.
pub fn write_cloud<W: Write>(cloud: &PointCloud, comments: &[String], mut out: W) -> std::io::Result<()> {
    let mut buf = String::new();
    let _ = writeln!(buf, "# k={}", cloud.intrinsic_dim());
    for c in comments {
        let _ = writeln!(buf, "# {c}");
    }
    let names: Vec<String> = (0..cloud.dim()).map(|c| format!("x{c}")).collect();
    let _ = writeln!(buf, "{},volume,boundary,area", names.join(","));
    for i in 0..cloud.len() {
        for x in cloud.point(i) {
            let _ = write!(buf, "{x},");
        }
        let _ = write!(buf, "{},", cloud.volume()[i]);
        match cloud.boundary_slot(i) {
            Some(s) => {
                let _ = writeln!(buf, "1,{}", cloud.area()[s]);
            }
            None => buf.push_str("0,\n"),
        }
    }
    out.write_all(buf.as_bytes())
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| PimError::io(path, e))?;
    write_cloud(cloud, comments, std::io::BufWriter::new(file)).map_err(|e| PimError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_point() {
        let c = parse_cloud("# k=2\nx0,x1,volume,boundary,area\n0,0,1,0,\n").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.num_boundary(), 0);
        assert_eq!(c.dim(), 2);
    }

    #[test]
    fn negative_volume_names_row() {
        let text = "# k=1\nx0,volume,boundary,area\n0,1,0,\n1,1,0,\n2,-1,0,\n";
        let err = parse_cloud(text).unwrap_err();
        assert!(matches!(err, PimError::Validation(_)));
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn boundary_without_area() {
        let text = "# k=1\nx0,volume,boundary,area\n0,1,1,\n";
        assert!(matches!(parse_cloud(text), Err(PimError::Validation(_))));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "# k=1\n# note\nx0,volume,boundary,area\n0,1,0,\nabc,1,0,\n";
        match parse_cloud(text) {
            Err(PimError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_k_line() {
        assert!(matches!(
            parse_cloud("x0,volume,boundary,area\n0,1,0,\n"),
            Err(PimError::Parse { line: 1, .. })
        ));
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        (1usize..4, 1usize..12).prop_flat_map(|(dim, n)| {
            (
                Just(dim),
                1..=dim,
                proptest::collection::vec(-1e3f64..1e3, n * dim),
                proptest::collection::vec(1e-6f64..10.0, n),
                proptest::collection::vec(proptest::option::of(1e-6f64..5.0), n),
            )
                .prop_map(|(dim, k, coords, volume, bflags)| {
                    let mut ids = Vec::new();
                    let mut area = Vec::new();
                    for (i, b) in bflags.iter().enumerate() {
                        if let Some(a) = b {
                            ids.push(i);
                            area.push(*a);
                        }
                    }
                    PointCloud::new(dim, k, coords, volume, ids, area).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn save_load_round_trip(cloud in arb_cloud()) {
            let mut first = Vec::new();
            write_cloud(&cloud, &["seed=1".to_string()], &mut first).unwrap();
            let loaded = parse_cloud(std::str::from_utf8(&first).unwrap()).unwrap();
            prop_assert_eq!(&loaded, &cloud);
            let mut second = Vec::new();
            write_cloud(&loaded, &["seed=1".to_string()], &mut second).unwrap();
            prop_assert_eq!(first, second);
        }
    }
}
