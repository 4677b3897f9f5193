//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; a `[section]` line
//! prefixes the undotted keys that follow with `section.` (`[]` ends the
//! section). Lists are comma separated. Every key must be known; typos are
//! errors.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::control::{AdmissibilityParams, ConductivityField, Phantom};
use crate::convergence::Check;
use crate::cost::{CurrentPattern, Measurement};
use crate::error::{EitError, Result};
use crate::geometry::{DomainSpec, Electrode};
use crate::inverse::OptimizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Constant σ (plus optional seeded jitter) and U = U*.
    Constant,
    /// 𝒬_h of the phantom and U = U*.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyData {
    /// `pattern.I` and `measurement.Ustar` as given.
    Given,
    /// Fluxes of the reference state and U* = U.
    Reference,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: DomainSpec,
    pub electrodes: Vec<Electrode>,
    pub phantom: ConductivityField,
    pub sigma_file: Option<PathBuf>,
    pub voltages: Option<Vec<f64>>,
    pub pattern: Option<CurrentPattern>,
    pub measurement: Option<Measurement>,
    /// h / h_data for synthetic measurements.
    pub data_refine: f64,
    pub noise: f64,
    pub params: AdmissibilityParams,
    pub h: Option<f64>,
    pub h_list: Vec<f64>,
    pub h_ref: Option<f64>,
    pub solver_tol: f64,
    pub optimizer: OptimizerConfig,
    pub init: InitKind,
    pub init_sigma: f64,
    pub jitter: f64,
    pub checks: BTreeSet<Check>,
    pub study_data: StudyData,
    pub samples: usize,
    pub directions: usize,
    pub seed: u64,
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    used: RefCell<BTreeSet<String>>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| EitError::Config(format!("line {}: expected `key = value`, got `{line}`", k + 1)))?;
            let key = key.trim();
            let full = if section.is_empty() || key.contains('.') { key.to_string() } else { format!("{section}.{key}") };
            if map.insert(full.clone(), (k + 1, value.trim().to_string())).is_some() {
                return Err(EitError::Config(format!("line {}: duplicate key `{full}`", k + 1)));
            }
        }
        Ok(Self { map, used: RefCell::new(BTreeSet::new()) })
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        let (line, v) = self.map.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some((*line, v.as_str()))
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|(_, v)| v)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|(line, v)| v.parse::<f64>().map_err(|_| EitError::Config(format!("line {line}: `{key}` expects a number, got `{v}`"))))
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| EitError::Config(format!("line {line}: `{key}` expects a non-negative integer, got `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| EitError::Config(format!("line {line}: `{key}` expects numbers, got `{x}`")))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| EitError::Config(format!("missing key `{key}`")))
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        for (key, (line, _)) in &self.map {
            if !used.contains(key) {
                return Err(EitError::Config(format!("line {line}: unknown key `{key}`")));
            }
        }
        Ok(())
    }
}

fn side(s: &str) -> Result<(usize, bool)> {
    Ok(match s {
        "x-" | "left" => (0, false),
        "x+" | "right" => (0, true),
        "y-" | "bottom" | "front" => (1, false),
        "y+" | "top" | "back" => (1, true),
        "z-" => (2, false),
        "z+" => (2, true),
        _ => return Err(EitError::Config(format!("unknown electrode side `{s}`"))),
    })
}

fn pair(e: &Entries, key: &str) -> Result<[f64; 2]> {
    let v = e.require(key, e.list(key)?)?;
    if v.len() != 2 {
        return Err(EitError::Config(format!("`{key}` expects two numbers")));
    }
    Ok([v[0], v[1]])
}

fn electrodes(e: &Entries, spec: &DomainSpec) -> Result<Vec<Electrode>> {
    let mut out = Vec::new();
    for k in 1.. {
        let p = format!("electrodes[{k}]");
        let z_key = format!("{p}.Z");
        let Some(z) = e.f64(&z_key)? else {
            break;
        };
        let electrode = match spec.dim() {
            _ if matches!(spec.kind(), crate::geometry::DomainKind::Disk2D { .. }) => {
                let a = e.require(&format!("{p}.a"), e.f64(&format!("{p}.a"))?)?;
                let b = e.require(&format!("{p}.b"), e.f64(&format!("{p}.b"))?)?;
                Electrode::on_arc(a, b, z)
            }
            2 => {
                let (axis, high) = side(e.require(&format!("{p}.edge"), e.str(&format!("{p}.edge")))?)?;
                let a = e.require(&format!("{p}.a"), e.f64(&format!("{p}.a"))?)?;
                let b = e.require(&format!("{p}.b"), e.f64(&format!("{p}.b"))?)?;
                Electrode::on_edge(axis, high, a, b, z)
            }
            _ => {
                let (axis, high) = side(e.require(&format!("{p}.edge"), e.str(&format!("{p}.edge")))?)?;
                Electrode::on_face(axis, high, pair(e, &format!("{p}.a"))?, pair(e, &format!("{p}.b"))?, z)
            }
        };
        out.push(electrode);
    }
    if out.is_empty() {
        return Err(EitError::Config("no electrodes: expected `electrodes[1].Z` and friends".into()));
    }
    Ok(out)
}

fn domain(e: &Entries) -> Result<DomainSpec> {
    let kind = e.require("domain.kind", e.str("domain.kind"))?;
    match kind {
        "rect" => DomainSpec::rect(e.require("domain.w1", e.f64("domain.w1")?)?, e.require("domain.w2", e.f64("domain.w2")?)?),
        "box" => DomainSpec::cuboid(
            e.require("domain.w1", e.f64("domain.w1")?)?,
            e.require("domain.w2", e.f64("domain.w2")?)?,
            e.require("domain.w3", e.f64("domain.w3")?)?,
        ),
        "disk" => DomainSpec::disk(e.require("domain.r", e.f64("domain.r")?)?),
        _ => Err(EitError::Config(format!("unknown domain.kind `{kind}` (rect, box or disk)"))),
    }
}

fn phantom(e: &Entries, spec: &DomainSpec) -> Result<ConductivityField> {
    let bg = e.f64_or("phantom.background", 1.0)?;
    let radius = e.f64_or("phantom.radius", 0.2)?;
    let amplitude = e.f64_or("phantom.amplitude", 1.0)?;
    match e.str("phantom").unwrap_or("constant") {
        "constant" => Ok(ConductivityField::Constant(bg)),
        "bump" => Ok(ConductivityField::Phantom(Phantom::bump(spec, bg, radius, amplitude)?)),
        "two_bumps" => Ok(ConductivityField::Phantom(Phantom::two_bumps(spec, bg)?)),
        other => Err(EitError::Config(format!("unknown phantom `{other}` (constant, bump or two_bumps)"))),
    }
}

impl RunConfig {
    /// Parses a configuration; relative file paths are resolved against
    /// `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let e = Entries::parse(text)?;
        let spec = domain(&e)?;
        let electrodes = electrodes(&e, &spec)?;
        crate::geometry::validate_electrodes(&spec, &electrodes)?;
        let phantom = phantom(&e, &spec)?;
        let sigma_file = e.str("sigma.file").map(|p| base.join(p));
        if let Some(p) = &sigma_file {
            if !p.is_file() {
                return Err(EitError::Config(format!("sigma.file `{}` does not exist", p.display())));
            }
        }
        let m = electrodes.len();
        let check_len = |key: &str, v: &Vec<f64>| -> Result<()> {
            if v.len() != m {
                return Err(EitError::Config(format!("`{key}` has {} entries for {m} electrodes", v.len())));
            }
            Ok(())
        };
        let voltages = e.list("voltages.U")?;
        if let Some(v) = &voltages {
            check_len("voltages.U", v)?;
            Measurement::new(v.clone())?;
        }
        let pattern = match e.list("pattern.I")? {
            Some(v) => {
                check_len("pattern.I", &v)?;
                Some(CurrentPattern::new(v)?)
            }
            None => None,
        };
        let measurement = match e.list("measurement.Ustar")? {
            Some(v) => {
                check_len("measurement.Ustar", &v)?;
                Some(Measurement::new(v)?)
            }
            None => None,
        };
        let data_refine = e.f64_or("measurement.refine", 4.0)?;
        let noise = e.f64_or("measurement.noise", 0.0)?;
        if !(data_refine >= 1.0) || !(noise >= 0.0) {
            return Err(EitError::Config("measurement.refine must be ≥ 1 and measurement.noise ≥ 0".into()));
        }
        let params = AdmissibilityParams::new(
            e.f64_or("params.R", 100.0)?,
            e.f64_or("params.sigma0", 0.5)?,
            e.f64_or("params.beta", 1.0)?,
        )?;
        let h = e.f64("grid.h")?;
        let h_list = e.list("grid.h_list")?.unwrap_or_default();
        let h_ref = e.f64("grid.h_ref")?;
        for v in h.iter().chain(&h_list).chain(&h_ref) {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(EitError::Config(format!("grid steps must be positive, got {v}")));
            }
        }
        let solver_tol = e.f64_or("solver.tol", 1e-12)?;
        let d = OptimizerConfig::default();
        let optimizer = OptimizerConfig {
            max_iters: e.usize_or("optimizer.max_iters", d.max_iters)?,
            initial_step: e.f64_or("optimizer.step", d.initial_step)?,
            shrink: e.f64_or("optimizer.shrink", d.shrink)?,
            sufficient_decrease: e.f64_or("optimizer.armijo", d.sufficient_decrease)?,
            grad_tol: e.f64_or("optimizer.grad_tol", d.grad_tol)?,
            cost_tol: e.f64_or("optimizer.cost_tol", d.cost_tol)?,
            solver_tol,
            seed: 0,
        };
        optimizer.validate()?;
        let init = match e.str("optimizer.init").unwrap_or("constant") {
            "constant" => InitKind::Constant,
            "truth" => InitKind::Truth,
            other => return Err(EitError::Config(format!("unknown optimizer.init `{other}` (constant or truth)"))),
        };
        let init_sigma = e.f64_or("optimizer.init_sigma", 1.0)?;
        let jitter = e.f64_or("optimizer.jitter", 0.0)?;
        let checks = match e.str("study.checks").unwrap_or("all") {
            "all" => Check::ALL.into_iter().collect(),
            list => list.split(',').map(|s| Check::parse(s.trim())).collect::<Result<BTreeSet<Check>>>()?,
        };
        let study_data = match e.str("study.data").unwrap_or("given") {
            "given" => StudyData::Given,
            "reference" => StudyData::Reference,
            other => return Err(EitError::Config(format!("unknown study.data `{other}` (given or reference)"))),
        };
        let samples = e.usize_or("check.samples", 100)?;
        let directions = e.usize_or("check.directions", 10)?;
        let seed = e.usize_or("seed", 0)? as u64;
        e.finish()?;
        let mut cfg = Self {
            spec,
            electrodes,
            phantom,
            sigma_file,
            voltages,
            pattern,
            measurement,
            data_refine,
            noise,
            params,
            h,
            h_list,
            h_ref,
            solver_tol,
            optimizer,
            init,
            init_sigma,
            jitter,
            checks,
            study_data,
            samples,
            directions,
            seed: 0,
        };
        cfg.set_seed(seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| EitError::Config(format!("cannot read config `{}`: {err}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.optimizer.seed = seed;
    }

    pub fn step(&self) -> Result<f64> {
        self.h.ok_or_else(|| EitError::Config("missing key `grid.h`".into()))
    }

    pub fn need_pattern(&self) -> Result<&CurrentPattern> {
        self.pattern.as_ref().ok_or_else(|| EitError::Config("missing key `pattern.I`".into()))
    }

    pub fn need_voltages(&self) -> Result<&[f64]> {
        self.voltages.as_deref().ok_or_else(|| EitError::Config("missing key `voltages.U`".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
        domain.kind = rect
        domain.w1 = 1
        domain.w2 = 1
        [electrodes[1]]
        edge = left
        a = 0.25
        b = 0.75
        Z = 1
        [electrodes[2]]
        edge = x+
        a = 0.25
        b = 0.75
        Z = 2   # second electrode
        [grid]
        h = 0.125
        [pattern]
        I = 1, -1
    ";

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::parse(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.electrodes.len(), 2);
        assert_eq!(c.electrodes[1].z, 2.0);
        assert_eq!(c.h, Some(0.125));
        assert_eq!(c.need_pattern().unwrap().values(), &[1.0, -1.0]);
        assert!(c.need_voltages().is_err());
        assert_eq!(c.checks.len(), Check::ALL.len());
        assert_eq!(c.params.radius, 100.0);
    }

    #[test]
    fn rejects_bad_input() {
        let unbalanced = MINIMAL.replace("I = 1, -1", "I = 1, -0.5");
        let e = RunConfig::parse(&unbalanced, Path::new(".")).unwrap_err();
        assert!(matches!(e, EitError::CurrentNotConserved(_)), "{e}");
        assert!(e.to_string().contains("conservation of charge"));
        let typo = format!("{MINIMAL}\nsolver.tolerance = 1e-9\n");
        assert!(matches!(RunConfig::parse(&typo, Path::new(".")), Err(EitError::Config(_))));
        let dup = format!("{MINIMAL}\n[grid]\nh = 0.25\n");
        assert!(RunConfig::parse(&dup, Path::new(".")).is_err());
        let no_file = format!("{MINIMAL}\nsigma.file = /nonexistent/sigma.csv\n");
        assert!(RunConfig::parse(&no_file, Path::new(".")).is_err());
        assert!(matches!(RunConfig::load(Path::new("/nonexistent.cfg")), Err(EitError::Config(_))));
        let wrong_len = format!("{MINIMAL}\nvoltages.U = 1, 0, -1\n");
        assert!(RunConfig::parse(&wrong_len, Path::new(".")).is_err());
    }

    #[test]
    fn parses_box_and_disk() {
        let b = "domain.kind = box\ndomain.w1 = 1\ndomain.w2 = 1\ndomain.w3 = 1\n\
                 electrodes[1].edge = z+\nelectrodes[1].a = 0.2, 0.2\nelectrodes[1].b = 0.6, 0.6\nelectrodes[1].Z = 1\n\
                 electrodes[2].edge = x-\nelectrodes[2].a = 0.2, 0.2\nelectrodes[2].b = 0.6, 0.6\nelectrodes[2].Z = 1\n";
        assert_eq!(RunConfig::parse(b, Path::new(".")).unwrap().spec.dim(), 3);
        let d = "domain.kind = disk\ndomain.r = 1\nelectrodes[1].a = 0\nelectrodes[1].b = 1\nelectrodes[1].Z = 1\n\
                 electrodes[2].a = 3\nelectrodes[2].b = 4\nelectrodes[2].Z = 1\nphantom = bump\n";
        let c = RunConfig::parse(d, Path::new(".")).unwrap();
        assert!(matches!(c.phantom, ConductivityField::Phantom(_)));
    }

    #[test]
    fn dotted_keys_ignore_section() {
        let text = format!("{MINIMAL}\nvoltages.U = 1, -1\n[]\nseed = 7\n");
        let c = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(c.need_voltages().unwrap(), &[1.0, -1.0]);
        assert_eq!(c.seed, 7);
    }
}
