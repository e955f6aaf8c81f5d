//! Plain key=value run configuration: dotted groups, '#' comments, unknown
//! keys rejected, duplicate keys rejected with both line numbers. The parse
//! is locale-independent (decimal points only, standard float syntax).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::Preset;
use crate::driver::{InitialVelocity, RunInputs, UpdateOrder};
use crate::error::{Error, Result};
use crate::grid::StaggeredGrid;
use crate::model::{FluidParams, FluxMode, FluxModel, RelPermKind, RelPermModel};
use crate::stokes::SolverSettings;
use crate::transport::{FluxScheme, TransportSettings};

const KNOWN_KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "grid.Lx",
    "grid.Ly",
    "fluid.mu1",
    "fluid.mu2",
    "fluid.nu",
    "fluid.tau",
    "rel_perm.kind",
    "rel_perm.exponent",
    "rel_perm.k_reg",
    "rel_perm.table",
    "flux.mode",
    "transport.epsilon",
    "transport.cfl",
    "transport.scheme",
    "transport.mollify_data",
    "transport.dt_max",
    "solver.tolerance",
    "solver.max_iterations",
    "solver.uzawa_step",
    "run.T",
    "run.output_cadence",
    "run.seed",
    "run.dense_output",
    "run.picard",
    "boundary.preset",
    "boundary.file",
    "init.u0",
    "init.v0",
    "study.epsilons",
    "study.taus",
];

/// Raw parsed key=value pairs with their line numbers.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub pairs: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, (String, usize)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let Some(eq) = stripped.find('=') else {
                return Err(Error::Config {
                    line,
                    msg: format!("expected key=value, got {stripped:?}"),
                });
            };
            let key = stripped[..eq].trim().to_string();
            let value = stripped[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: "empty key".into(),
                });
            }
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key {key:?}"),
                });
            }
            if let Some((_, first)) = pairs.get(&key) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key {key:?} (first set at line {first})"),
                });
            }
            pairs.insert(key, (value, line));
        }
        Ok(Self { pairs })
    }

    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.pairs.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some((v, line)) => v.parse::<f64>().map_err(|_| Error::Config {
                line,
                msg: format!("{key} must be a number, got {v:?}"),
            }),
        }
    }

    fn required_f64(&self, key: &str) -> Result<f64> {
        match self.get(key) {
            None => Err(Error::Config {
                line: 0,
                msg: format!("missing required key {key}"),
            }),
            Some(_) => self.f64(key, f64::NAN),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some((v, line)) => v.parse::<usize>().map_err(|_| Error::Config {
                line,
                msg: format!("{key} must be a nonnegative integer, got {v:?}"),
            }),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(("true", _)) => Ok(true),
            Some(("false", _)) => Ok(false),
            Some((v, line)) => Err(Error::Config {
                line,
                msg: format!("{key} must be true or false, got {v:?}"),
            }),
        }
    }
}

/// Validated run configuration; `resolve` turns it into solver inputs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub nu: f64,
    pub tau: f64,
    pub rel_perm_kind: String,
    pub rel_perm_exponent: f64,
    pub k_reg: f64,
    pub rel_perm_table: Option<PathBuf>,
    pub flux_mode: String,
    pub epsilon: f64,
    pub cfl: f64,
    pub scheme: String,
    pub mollify_data: bool,
    pub dt_max: f64,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,
    pub uzawa_step: Option<f64>,
    pub t_end: f64,
    pub output_cadence: f64,
    pub seed: u64,
    pub dense_output: bool,
    pub picard: bool,
    pub boundary_preset: String,
    pub boundary_file: Option<PathBuf>,
    pub init_u0: Option<f64>,
    pub init_v0: String,
    pub study_epsilons: Vec<f64>,
    pub study_taus: Vec<f64>,
}

fn parse_list(text: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|_| Error::Config {
                line,
                msg: format!("{key}: bad number {s:?}"),
            })
        })
        .collect()
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let file = ConfigFile::parse(text)?;
        let nx = file.usize("grid.nx", 0)?;
        if file.get("grid.nx").is_none() {
            return Err(Error::Config {
                line: 0,
                msg: "missing required key grid.nx".into(),
            });
        }
        if nx < 4 {
            let line = file.get("grid.nx").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: "grid.nx must be >= 4".into(),
            });
        }
        let ny = file.usize("grid.ny", nx)?;
        if ny < 4 && ny != 1 {
            let line = file.get("grid.ny").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: "grid.ny must be >= 4 (or 1 for slice mode)".into(),
            });
        }
        let t_end = file.required_f64("run.T")?;
        if !(t_end > 0.0) {
            let line = file.get("run.T").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: "run.T must be positive".into(),
            });
        }

        let rel_perm_kind = file
            .get("rel_perm.kind")
            .map(|(v, _)| v.to_string())
            .unwrap_or_else(|| "corey_quadratic".into());
        if !["corey_quadratic", "linear", "tabulated"].contains(&rel_perm_kind.as_str()) {
            let line = file.get("rel_perm.kind").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: format!("rel_perm.kind: unknown kind {rel_perm_kind:?}"),
            });
        }
        let flux_mode = file
            .get("flux.mode")
            .map(|(v, _)| v.to_string())
            .unwrap_or_else(|| "simple".into());
        if !["simple", "series"].contains(&flux_mode.as_str()) {
            let line = file.get("flux.mode").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: format!("flux.mode: unknown mode {flux_mode:?}"),
            });
        }
        let scheme = file
            .get("transport.scheme")
            .map(|(v, _)| v.to_string())
            .unwrap_or_else(|| "upwind_monotone".into());
        if FluxScheme::parse(&scheme).is_none() {
            let line = file.get("transport.scheme").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: format!("transport.scheme: unknown scheme {scheme:?}"),
            });
        }
        let boundary_preset = file
            .get("boundary.preset")
            .map(|(v, _)| v.to_string())
            .unwrap_or_else(|| "quiescent".into());
        if Preset::parse(&boundary_preset).is_none() {
            let line = file.get("boundary.preset").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: format!("boundary.preset: unknown preset {boundary_preset:?}"),
            });
        }
        let init_v0 = file
            .get("init.v0")
            .map(|(v, _)| v.to_string())
            .unwrap_or_else(|| "lifting".into());
        if !["lifting", "zero"].contains(&init_v0.as_str()) {
            let line = file.get("init.v0").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: format!("init.v0 must be lifting or zero, got {init_v0:?}"),
            });
        }
        let uzawa_step = match file.get("solver.uzawa_step") {
            None => None,
            Some(("auto", _)) => None,
            Some((v, line)) => Some(v.parse::<f64>().map_err(|_| Error::Config {
                line,
                msg: format!("solver.uzawa_step must be auto or a number, got {v:?}"),
            })?),
        };
        let cfl = file.f64("transport.cfl", crate::defaults::CFL_DEFAULT)?;
        if !(cfl > 0.0 && cfl <= 1.0) {
            let line = file.get("transport.cfl").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::Config {
                line,
                msg: "transport.cfl must lie in (0, 1]".into(),
            });
        }

        let cadence_default = t_end / 50.0;
        let config = Self {
            nx,
            ny,
            lx: file.f64("grid.Lx", 1.0)?,
            ly: file.f64("grid.Ly", 1.0)?,
            mu1: file.f64("fluid.mu1", 1.0)?,
            mu2: file.f64("fluid.mu2", 1.0)?,
            nu: file.f64("fluid.nu", 0.01)?,
            tau: file.f64("fluid.tau", 0.0)?,
            rel_perm_kind,
            rel_perm_exponent: file.f64("rel_perm.exponent", 2.0)?,
            k_reg: file.f64("rel_perm.k_reg", crate::defaults::K_REG_DEFAULT)?,
            rel_perm_table: file.get("rel_perm.table").map(|(v, _)| PathBuf::from(v)),
            flux_mode,
            epsilon: file.f64("transport.epsilon", 0.0)?,
            cfl,
            scheme,
            mollify_data: file.bool("transport.mollify_data", false)?,
            dt_max: file.f64("transport.dt_max", crate::defaults::DT_MAX_DEFAULT)?,
            solver_tolerance: file.f64("solver.tolerance", crate::defaults::SOLVER_TOLERANCE)?,
            solver_max_iterations: file
                .usize("solver.max_iterations", crate::defaults::SOLVER_MAX_ITERATIONS)?,
            uzawa_step,
            t_end,
            output_cadence: file.f64("run.output_cadence", cadence_default)?,
            seed: file.usize("run.seed", 0)? as u64,
            dense_output: file.bool("run.dense_output", false)?,
            picard: file.bool("run.picard", false)?,
            boundary_preset,
            boundary_file: file.get("boundary.file").map(|(v, _)| PathBuf::from(v)),
            init_u0: match file.get("init.u0") {
                None => None,
                Some(_) => Some(file.f64("init.u0", f64::NAN)?),
            },
            init_v0,
            study_epsilons: match file.get("study.epsilons") {
                None => Vec::new(),
                Some((v, line)) => parse_list(v, line, "study.epsilons")?,
            },
            study_taus: match file.get("study.taus") {
                None => Vec::new(),
                Some((v, line)) => parse_list(v, line, "study.taus")?,
            },
        };
        if let Some(u0) = config.init_u0 {
            if !(0.0..=1.0).contains(&u0) {
                let line = file.get("init.u0").map(|(_, l)| l).unwrap_or(0);
                return Err(Error::Config {
                    line,
                    msg: "init.u0 must lie in [0, 1]".into(),
                });
            }
        }
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// Canonical echo of the effective configuration; parsing it back gives
    /// the same config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        out.push_str("# effective configuration\n");
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("grid.nx", self.nx.to_string());
        push("grid.ny", self.ny.to_string());
        push("grid.Lx", format!("{}", self.lx));
        push("grid.Ly", format!("{}", self.ly));
        push("fluid.mu1", format!("{}", self.mu1));
        push("fluid.mu2", format!("{}", self.mu2));
        push("fluid.nu", format!("{}", self.nu));
        push("fluid.tau", format!("{}", self.tau));
        push("rel_perm.kind", self.rel_perm_kind.clone());
        push("rel_perm.exponent", format!("{}", self.rel_perm_exponent));
        push("rel_perm.k_reg", format!("{}", self.k_reg));
        if let Some(p) = &self.rel_perm_table {
            push("rel_perm.table", p.display().to_string());
        }
        push("flux.mode", self.flux_mode.clone());
        push("transport.epsilon", format!("{}", self.epsilon));
        push("transport.cfl", format!("{}", self.cfl));
        push("transport.scheme", self.scheme.clone());
        push("transport.mollify_data", self.mollify_data.to_string());
        push("transport.dt_max", format!("{}", self.dt_max));
        push("solver.tolerance", format!("{}", self.solver_tolerance));
        push(
            "solver.max_iterations",
            self.solver_max_iterations.to_string(),
        );
        push(
            "solver.uzawa_step",
            self.uzawa_step
                .map_or("auto".into(), |v| format!("{v}")),
        );
        push("run.T", format!("{}", self.t_end));
        push("run.output_cadence", format!("{}", self.output_cadence));
        push("run.seed", self.seed.to_string());
        push("run.dense_output", self.dense_output.to_string());
        push("run.picard", self.picard.to_string());
        push("boundary.preset", self.boundary_preset.clone());
        if let Some(p) = &self.boundary_file {
            push("boundary.file", p.display().to_string());
        }
        if let Some(u0) = self.init_u0 {
            push("init.u0", format!("{u0}"));
        }
        push("init.v0", self.init_v0.clone());
        if !self.study_epsilons.is_empty() {
            push(
                "study.epsilons",
                self.study_epsilons
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        if !self.study_taus.is_empty() {
            push(
                "study.taus",
                self.study_taus
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        out
    }

    pub fn initial_velocity(&self) -> InitialVelocity {
        if self.init_v0 == "zero" {
            InitialVelocity::Zero
        } else {
            InitialVelocity::Lifting
        }
    }

    /// Build solver inputs. `base_dir` anchors relative table paths.
    pub fn resolve(&self, base_dir: &Path) -> Result<RunInputs> {
        let grid = if self.ny == 1 {
            let mut g = StaggeredGrid::slice_1d(self.nx, self.lx);
            g.ly = self.ly.min(g.ly).max(g.ly); // slice mode keeps square cells
            g
        } else {
            StaggeredGrid::new(self.nx, self.ny, self.lx, self.ly)?
        };
        let fluid = FluidParams::new(self.mu1, self.mu2, self.nu, self.tau)?;
        let kind = match self.rel_perm_kind.as_str() {
            "corey_quadratic" => RelPermKind::Corey {
                exponent: self.rel_perm_exponent,
            },
            "linear" => RelPermKind::Linear,
            "tabulated" => {
                let path = self.rel_perm_table.as_ref().ok_or_else(|| Error::Config {
                    line: 0,
                    msg: "rel_perm.kind=tabulated requires rel_perm.table".into(),
                })?;
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                RelPermKind::Tabulated {
                    table: read_rel_perm_table(&full)?,
                }
            }
            _ => unreachable!("validated in from_text"),
        };
        let rel_perm = RelPermModel {
            kind,
            k_reg: self.k_reg,
        };
        let mode = if self.flux_mode == "series" {
            FluxMode::Series
        } else {
            FluxMode::Simple
        };
        let model = FluxModel::new(fluid, rel_perm, mode)?;

        let preset = Preset::parse(&self.boundary_preset).expect("validated");
        let boundary = match &self.boundary_file {
            None => preset.boundary(&grid, self.t_end),
            Some(path) => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                read_boundary_csv(&full, &grid, self.t_end)?
            }
        };
        let mut init = preset.initial(&grid);
        if let Some(u0) = self.init_u0 {
            init = crate::data::InitialData::constant(&grid, u0);
        }

        Ok(RunInputs {
            grid,
            model,
            boundary,
            init,
            transport: TransportSettings {
                epsilon: self.epsilon,
                cfl: self.cfl,
                scheme: FluxScheme::parse(&self.scheme).expect("validated"),
                mollify_data: self.mollify_data,
                dt_max: self.dt_max,
            },
            solver: SolverSettings {
                max_iterations: self.solver_max_iterations,
                tolerance: self.solver_tolerance,
                uzawa_step: self.uzawa_step,
                trace: false,
            },
            tau: self.tau,
            t_end: self.t_end,
            cadence: self.output_cadence,
            dense: self.dense_output,
            picard: self.picard,
            order: UpdateOrder::VelocityFirst,
            dt_ramp_start: None,
        })
    }
}

/// CSV rows (s, k_r1, k_r2); '#' comments and a header line are tolerated.
pub fn read_rel_perm_table(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Config {
                line: lineno + 1,
                msg: format!("rel-perm table needs 3 columns, got {}", cols.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config {
                line: lineno + 1,
                msg: format!("bad number {s:?}"),
            })
        };
        match (parse(cols[0]), parse(cols[1]), parse(cols[2])) {
            (Ok(a), Ok(b), Ok(c)) => rows.push((a, b, c)),
            _ if lineno == 0 => continue, // header
            (a, b, c) => {
                a?;
                b?;
                c?;
            }
        }
    }
    Ok(rows)
}

/// CSV rows (face_index, time_level, u_b, b_n, b_t). Time levels are
/// uniform over [0, T] with count max(time_level) + 1; unlisted entries
/// stay zero.
pub fn read_boundary_csv(
    path: &Path,
    grid: &StaggeredGrid,
    t_end: f64,
) -> Result<crate::data::BoundaryData> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(usize, usize, f64, f64, f64)> = Vec::new();
    let mut max_level = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(Error::Config {
                line: lineno + 1,
                msg: format!("boundary CSV needs 5 columns, got {}", cols.len()),
            });
        }
        let face: usize = match cols[0].parse() {
            Ok(v) => v,
            Err(_) if lineno == 0 => continue, // header
            Err(_) => {
                return Err(Error::Config {
                    line: lineno + 1,
                    msg: format!("bad face index {:?}", cols[0]),
                })
            }
        };
        let level: usize = cols[1].parse().map_err(|_| Error::Config {
            line: lineno + 1,
            msg: format!("bad time level {:?}", cols[1]),
        })?;
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config {
                line: lineno + 1,
                msg: format!("bad number {s:?}"),
            })
        };
        if face >= grid.n_boundary_faces() {
            return Err(Error::Config {
                line: lineno + 1,
                msg: format!(
                    "face index {face} out of range (grid has {})",
                    grid.n_boundary_faces()
                ),
            });
        }
        max_level = max_level.max(level);
        rows.push((face, level, num(cols[2])?, num(cols[3])?, num(cols[4])?));
    }
    let n_levels = max_level + 1;
    let nf = grid.n_boundary_faces();
    let times: Vec<f64> = (0..n_levels)
        .map(|k| {
            if n_levels == 1 {
                0.0
            } else {
                t_end * k as f64 / (n_levels - 1) as f64
            }
        })
        .collect();
    let mut data = crate::data::BoundaryData {
        times,
        u_b: vec![vec![0.0; nf]; n_levels],
        b_n: vec![vec![0.0; nf]; n_levels],
        b_t: vec![vec![0.0; nf]; n_levels],
        slip: [false; 4],
    };
    for (face, level, u_b, b_n, b_t) in rows {
        data.u_b[level][face] = u_b;
        data.b_n[level][face] = b_n;
        data.b_t[level][face] = b_t;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_applies_defaults() {
        let cfg = RunConfig::from_text("grid.nx=64\nrun.T=0.5\n").unwrap();
        assert_eq!(cfg.nx, 64);
        assert_eq!(cfg.ny, 64);
        assert_eq!(cfg.t_end, 0.5);
        assert_eq!(cfg.epsilon, 0.0);
        assert_eq!(cfg.boundary_preset, "quiescent");
        assert!(cfg.uzawa_step.is_none());
        assert_eq!(cfg.solver_tolerance, 1e-10);
    }

    #[test]
    fn bad_values_report_lines() {
        let err = RunConfig::from_text("grid.nx=-4\nrun.T=0.5\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("grid.nx"), "{msg}");

        let err = RunConfig::from_text("grid.nx=3\nrun.T=0.5\n").unwrap_err();
        assert!(format!("{err}").contains(">= 4"));

        let err = RunConfig::from_text("grid.nx=8\nrun.T=0.5\nbogus.key=1\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 3") && msg.contains("unknown key"), "{msg}");
    }

    #[test]
    fn duplicate_keys_name_both_lines() {
        let err =
            RunConfig::from_text("grid.nx=8\nrun.T=0.5\ngrid.nx=16\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 3") && msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn echo_round_trip() {
        let text = "grid.nx=32\nrun.T=0.25\nfluid.nu=0.05\ntransport.epsilon=1e-3\nboundary.preset=flood\nstudy.taus=1e-1,1e-2\n";
        let cfg = RunConfig::from_text(text).unwrap();
        let echoed = cfg.echo();
        let cfg2 = RunConfig::from_text(&echoed).unwrap();
        let echoed2 = cfg2.echo();
        assert_eq!(echoed, echoed2);
        assert_eq!(cfg2.nu, 0.05);
        assert_eq!(cfg2.study_taus, vec![0.1, 0.01]);
    }

    #[test]
    fn resolve_builds_runnable_inputs() {
        let cfg = RunConfig::from_text(
            "grid.nx=8\nrun.T=0.05\nboundary.preset=flood\nfluid.tau=1e-3\n",
        )
        .unwrap();
        let mut inputs = cfg.resolve(Path::new(".")).unwrap();
        inputs.prepare(cfg.initial_velocity()).unwrap();
        let traj = crate::driver::run_ibvp_tau(&inputs).unwrap();
        assert!(traj.n_levels() > 1);
    }

    #[test]
    fn missing_required_keys() {
        assert!(RunConfig::from_text("run.T=0.5\n").is_err());
        assert!(RunConfig::from_text("grid.nx=8\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = RunConfig::from_text(
            "# a comment\n\ngrid.nx=16 # trailing comment\nrun.T=1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.nx, 16);
    }
}
