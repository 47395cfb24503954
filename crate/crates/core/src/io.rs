//! File emission (legacy VTK, CSV, JSON manifests) and config loading.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::cases::CaseFile;
use crate::domain::GridGeometry;
use crate::error::{ConfigError, Error, Result};
use crate::forward::SolveReport;
use crate::lattice::Stencil;
use crate::optimizer::IterationRecord;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// Float formatting shared by every text output: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub enum VtkField<'a> {
    Scalars(&'a [f64]),
    Vectors(&'a [[f64; 3]]),
}

/// Legacy ASCII `STRUCTURED_POINTS` file with point data.
pub fn vtk_structured_points(geometry: &GridGeometry, title: &str, fields: &[(&str, VtkField<'_>)]) -> String {
    let d = geometry.dims();
    let n = geometry.len();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.lines().next().unwrap_or(""));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", d[0], d[1], d[2]);
    let _ = writeln!(s, "ORIGIN 0 0 0");
    let _ = writeln!(s, "SPACING 1 1 1");
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, field) in fields {
        match field {
            VtkField::Scalars(v) => {
                let _ = writeln!(s, "SCALARS {name} double 1");
                let _ = writeln!(s, "LOOKUP_TABLE default");
                for x in v.iter() {
                    let _ = writeln!(s, "{}", fmt_f64(*x));
                }
            }
            VtkField::Vectors(v) => {
                let _ = writeln!(s, "VECTORS {name} double");
                for x in v.iter() {
                    let _ = writeln!(s, "{} {} {}", fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(x[2]));
                }
            }
        }
    }
    s
}

/// Minimal CSV builder; cells never contain separators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Convergence log of one solve.
pub fn residual_csv(report: &SolveReport) -> CsvTable {
    let mut t = CsvTable::new(&["step", "residual", "mass", "objective"]);
    for r in &report.history {
        t.push(vec![r.step.to_string(), fmt_f64(r.residual), fmt_f64(r.mass), fmt_f64(r.objective)]);
    }
    t
}

/// Optimization history.
pub fn history_csv(history: &[IterationRecord]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "iter",
        "J",
        "G",
        "lambda",
        "changed",
        "forward_steps",
        "adjoint_steps",
        "forward_status",
        "adjoint_status",
    ]);
    for r in history {
        t.push(vec![
            r.iteration.to_string(),
            fmt_f64(r.objective),
            fmt_f64(r.volume),
            fmt_f64(r.lambda),
            r.changed.to_string(),
            r.forward_steps.to_string(),
            r.adjoint_steps.to_string(),
            r.forward_status.label().to_string(),
            r.adjoint_status.map_or("none", |s| s.label()).to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StencilRow {
    pub index: usize,
    pub e: [i32; 3],
    pub weight: f64,
    pub opposite: usize,
}

pub fn stencil_table(stencil: &Stencil) -> Vec<StencilRow> {
    (0..stencil.q())
        .map(|i| StencilRow { index: i, e: stencil.velocities()[i], weight: stencil.weights()[i], opposite: stencil.opposite()[i] })
        .collect()
}

/// Run metadata written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub version: String,
    pub command: String,
    pub stencil: Vec<StencilRow>,
    /// Derived values the run actually used (thermal relaxation times, inlet
    /// speed, Reynolds number, ...).
    pub resolved: serde_json::Map<String, serde_json::Value>,
    pub statuses: serde_json::Map<String, serde_json::Value>,
    pub timings: serde_json::Map<String, serde_json::Value>,
}

impl RunInfo {
    pub fn new(command: &str, stencil: &Stencil) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            stencil: stencil_table(stencil),
            resolved: Default::default(),
            statuses: Default::default(),
            timings: Default::default(),
        }
    }
}

/// `{ "config": ..., "run": ... }`. The `config` member is a complete case
/// file, so a manifest can be fed back as a config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: CaseFile,
    pub run: RunInfo,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

/// Parses a case from TOML or JSON text. A run manifest is accepted and its
/// `config` member used.
pub fn parse_case(text: &str, json: bool) -> Result<CaseFile, ConfigError> {
    if json {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let v = match v {
            serde_json::Value::Object(mut m) if m.contains_key("config") && m.contains_key("run") => m.remove("config").unwrap(),
            other => other,
        };
        serde_json::from_value(v).map_err(|e| ConfigError::Parse(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// Reads a config file; `.json` is parsed as JSON, everything else as TOML.
pub fn load_case(path: &Path) -> Result<CaseFile> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let case = parse_case(&text, json).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })?;
    case.case.validate()?;
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::lattice::{make_stencil, StencilKind};

    #[test]
    fn vtk_header_and_counts() {
        let g = GridGeometry::new(&[4, 3]).unwrap();
        let v: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let u = vec![[0.5, 0.0, 0.0]; 12];
        let s = vtk_structured_points(&g, "t", &[("rho", VtkField::Scalars(&v)), ("u", VtkField::Vectors(&u))]);
        assert!(s.starts_with("# vtk DataFile Version 3.0\nt\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS 4 3 1\n"));
        assert!(s.contains("POINT_DATA 12\nSCALARS rho double 1\nLOOKUP_TABLE default\n"));
        assert_eq!(s.lines().count(), 8 + 2 + 12 + 1 + 12);
    }

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn manifest_feeds_back_as_config() {
        let c = cases::pipe_bend_2d(20, 0.8, 0.2, 0.25);
        let m = RunManifest { config: c.clone(), run: RunInfo::new("forward", &make_stencil(StencilKind::D2Q9)) };
        assert_eq!(parse_case(&m.to_json(), true).unwrap(), c);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn toml_errors_carry_location() {
        let e = parse_case("[case]\ntau = \"x\"\n", false).unwrap_err();
        assert!(e.to_string().contains("line"), "{e}");
    }
}
