//! `key = value` run configuration.
//!
//! Keys before the first `[section]` header apply to every command; keys in
//! `[geodesic]`, `[jacobi-scan]`, `[ops-selftest]` or `[cpn-verify]` apply
//! only when that command runs and override the shared ones. `--set`
//! overrides from the command line win over both. Every value is validated
//! before any computation starts, and errors name the line they came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use sympflow::geodesic::Formulation;
use sympflow::spectral::Grid2D;
use sympflow::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Geodesic,
    JacobiScan,
    OpsSelftest,
    CpnVerify,
}

impl Command {
    pub const ALL: [Command; 4] = [Command::Geodesic, Command::JacobiScan, Command::OpsSelftest, Command::CpnVerify];

    pub fn name(self) -> &'static str {
        match self {
            Command::Geodesic => "geodesic",
            Command::JacobiScan => "jacobi-scan",
            Command::OpsSelftest => "ops-selftest",
            Command::CpnVerify => "cpn-verify",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Where a value came from, for error messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    File { path: String, line: usize },
    Flag,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Flag => write!(f, "--set"),
            Origin::Default => write!(f, "default"),
        }
    }
}

/// A configuration error with its location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.origin, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(origin: &Origin, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { origin: origin.clone(), message: message.into() })
}

/// Galerkin basis selection.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisSpec {
    /// The `m` lowest directions.
    Lowest,
    /// Harmonics plus `k2 = sector_k2`, `|k1| <= sector_kmax`.
    Sector { k2: i64, kmax: i64 },
}

/// Validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Stream Fourier coefficients `(k1, k2, re, im)` as given.
    pub modes: Vec<(i64, i64, f64, f64)>,
    pub harmonic: [f64; 2],
    pub form: Formulation,
    pub dealias: bool,
    pub tracers: bool,
    pub diagnostics_every: usize,
    pub diagnostics_basis: usize,
    pub m: usize,
    pub basis: BasisSpec,
    /// `(start, stop, count)`, inclusive.
    pub t_grid: (f64, f64, usize),
    pub threshold: f64,
    pub confirm: bool,
    pub seed: u64,
    pub trials: usize,
    pub cpn_n: usize,
    pub execution: Execution,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "command",
    "n",
    "dt",
    "t_end",
    "modes",
    "harmonic",
    "form",
    "dealias",
    "tracers",
    "diagnostics_every",
    "diagnostics_basis",
    "m",
    "basis",
    "sector_k2",
    "sector_kmax",
    "t_grid",
    "threshold",
    "confirm",
    "seed",
    "trials",
    "cpn_n",
    "execution",
    "out",
];

/// Unvalidated key/value pairs with their origins.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    shared: BTreeMap<String, (String, Origin)>,
    sections: BTreeMap<String, BTreeMap<String, (String, Origin)>>,
    flags: BTreeMap<String, (String, Origin)>,
}

impl RawConfig {
    /// Parses file text; `path` is used only in messages.
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let origin = Origin::File { path: path.to_string(), line: i + 1 };
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if Command::parse(name).is_none() {
                    return err(&origin, format!("unknown section [{name}]"));
                }
                section = Some(name.to_string());
                raw.sections.entry(name.to_string()).or_default();
                continue;
            }
            let (key, value) = split_pair(line, &origin)?;
            let map = match &section {
                Some(s) => raw.sections.get_mut(s).expect("section created on header"),
                None => &mut raw.shared,
            };
            if map.insert(key.clone(), (value, origin.clone())).is_some() {
                return err(&origin, format!("duplicate key `{key}`"));
            }
        }
        Ok(raw)
    }

    /// Adds a `key=value` override.
    pub fn set(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = split_pair(pair, &Origin::Flag)?;
        self.flags.insert(key, (value, Origin::Flag));
        Ok(())
    }

    /// Merged view for a command: shared keys, then the command's section,
    /// then overrides.
    fn merged(&self, command: Command) -> BTreeMap<String, (String, Origin)> {
        let mut m = self.shared.clone();
        if let Some(s) = self.sections.get(command.name()) {
            m.extend(s.clone());
        }
        m.extend(self.flags.clone());
        m
    }

    /// The command named by the configuration itself, if any.
    pub fn command(&self) -> Option<(String, Origin)> {
        self.flags.get("command").or_else(|| self.shared.get("command")).cloned()
    }
}

fn split_pair(line: &str, origin: &Origin) -> Result<(String, String), ConfigError> {
    let Some((k, v)) = line.split_once('=') else {
        return err(origin, format!("expected `key = value`, got `{line}`"));
    };
    let key = k.trim().to_string();
    if !KEYS.contains(&key.as_str()) {
        return err(origin, format!("unknown key `{key}`"));
    }
    Ok((key, v.trim().to_string()))
}

/// Typed lookups with defaults.
struct Lookup<'a> {
    map: &'a BTreeMap<String, (String, Origin)>,
}

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<(&str, &Origin)> {
        self.map.get(key).map(|(v, o)| (v.as_str(), o))
    }

    fn get<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<(T, Origin), ConfigError> {
        match self.raw(key) {
            None => Ok((default, Origin::Default)),
            Some((v, o)) => match parse(v) {
                Some(x) => Ok((x, o.clone())),
                None => err(o, format!("{key}: expected {what}, got `{v}`")),
            },
        }
    }

    fn float(&self, key: &str, default: f64) -> Result<(f64, Origin), ConfigError> {
        self.get(key, default, |v| v.parse::<f64>().ok().filter(|x| x.is_finite()), "a finite number")
    }

    fn uint(&self, key: &str, default: usize) -> Result<(usize, Origin), ConfigError> {
        self.get(key, default, |v| v.parse().ok(), "a non-negative integer")
    }

    fn boolean(&self, key: &str, default: bool) -> Result<(bool, Origin), ConfigError> {
        self.get(key, default, |v| v.parse().ok(), "true or false")
    }
}

/// Numbers inside one `( .. )` group.
fn tuple_items(s: &str) -> Option<Vec<&str>> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

fn parse_modes(v: &str) -> Option<Vec<(i64, i64, f64, f64)>> {
    let inner = v.trim().strip_prefix('[')?.strip_suffix(']')?.trim();
    let mut out = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let close = rest.find(')')?;
        let items = tuple_items(&rest[..=close])?;
        if items.len() != 4 {
            return None;
        }
        let re: f64 = items[2].parse().ok()?;
        let im: f64 = items[3].parse().ok()?;
        if !(re.is_finite() && im.is_finite()) {
            return None;
        }
        out.push((items[0].parse().ok()?, items[1].parse().ok()?, re, im));
        rest = rest[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return None;
            }
        } else if !rest.is_empty() {
            return None;
        }
    }
    Some(out)
}

fn parse_pair(v: &str) -> Option<[f64; 2]> {
    let items = tuple_items(v)?;
    if items.len() != 2 {
        return None;
    }
    let a: f64 = items[0].parse().ok()?;
    let b: f64 = items[1].parse().ok()?;
    (a.is_finite() && b.is_finite()).then_some([a, b])
}

fn parse_t_grid(v: &str) -> Option<(f64, f64, usize)> {
    let p: Vec<&str> = v.split(':').map(str::trim).collect();
    if p.len() != 3 {
        return None;
    }
    Some((p[0].parse().ok()?, p[1].parse().ok()?, p[2].parse().ok()?))
}

/// Completes a coefficient list to a real stream: each `k` without its
/// partner `-k` gets the conjugate; listed pairs must already be conjugate.
/// Returns `(k1, k2, a, b)` terms `a cos(k.x) + b sin(k.x)`.
pub fn real_terms(modes: &[(i64, i64, f64, f64)]) -> Result<Vec<(i64, i64, f64, f64)>, String> {
    let mut seen: BTreeMap<(i64, i64), (f64, f64)> = BTreeMap::new();
    for &(k1, k2, re, im) in modes {
        if (k1, k2) == (0, 0) {
            return Err("mode (0, 0) is a constant stream and carries no velocity; use `harmonic`".into());
        }
        if seen.insert((k1, k2), (re, im)).is_some() {
            return Err(format!("mode ({k1}, {k2}) listed twice"));
        }
    }
    let mut out = Vec::new();
    for (&(k1, k2), &(re, im)) in &seen {
        if let Some(&(pr, pi)) = seen.get(&(-k1, -k2)) {
            let scale = re.abs().max(im.abs()).max(1.0);
            if (pr - re).abs() > 1e-12 * scale || (pi + im).abs() > 1e-12 * scale {
                return Err(format!("modes ({k1}, {k2}) and ({}, {}) are not complex conjugates", -k1, -k2));
            }
            // Emit each pair once, from its canonical member.
            if (k1, k2) < (-k1, -k2) {
                continue;
            }
        }
        // c e^{ik.x} + conj(c) e^{-ik.x} = 2 Re c cos(k.x) - 2 Im c sin(k.x)
        out.push((k1, k2, 2.0 * re, -2.0 * im));
    }
    Ok(out)
}

impl RunConfig {
    /// Validates the merged configuration for `command`.
    pub fn from_raw(raw: &RawConfig, command: Command) -> Result<Self, ConfigError> {
        let map = raw.merged(command);
        let l = Lookup { map: &map };
        let (n, on) = l.uint("n", 32)?;
        if n < 8 || n % 2 != 0 {
            return err(&on, format!("n must be even and at least 8, got {n}"));
        }
        let grid = Grid2D::new(n).map_err(|e| ConfigError { origin: on.clone(), message: e.to_string() })?;
        let (dt, o) = l.float("dt", 0.01)?;
        if dt <= 0.0 {
            return err(&o, format!("dt must be positive, got {dt}"));
        }
        let (t_end, o) = l.float("t_end", 1.0)?;
        if t_end < 0.0 {
            return err(&o, format!("t_end must be non-negative, got {t_end}"));
        }
        let (modes, om) = l.get("modes", Vec::new(), parse_modes, "a list like [(1,0,0.5,0.0), (0,1,0.25,0.0)]")?;
        let terms = real_terms(&modes).or_else(|m| err(&om, m))?;
        if let Some(&(k1, k2, ..)) = terms.iter().find(|&&(k1, k2, ..)| !grid.keeps(k1, k2)) {
            return err(&om, format!("mode ({k1}, {k2}) lies outside the dealiased band |k| <= {} of n = {n}", grid.dealias_band()));
        }
        let (harmonic, _) = l.get("harmonic", [0.0; 2], parse_pair, "a pair like (0.3, -0.7)")?;
        let (form, _) = l.get(
            "form",
            Formulation::Direct,
            |v| match v {
                "direct" => Some(Formulation::Direct),
                "vorticity" => Some(Formulation::Vorticity),
                _ => None,
            },
            "direct or vorticity",
        )?;
        let (dealias, _) = l.boolean("dealias", true)?;
        let (tracers, _) = l.boolean("tracers", true)?;
        let (diagnostics_every, _) = l.uint("diagnostics_every", 10)?;
        let (diagnostics_basis, od) = l.uint("diagnostics_basis", 24)?;
        let limit = sympflow::jacobi::max_basis_dim(&grid);
        if diagnostics_basis > limit {
            return err(&od, format!("diagnostics_basis {diagnostics_basis} is too large for n = {n} (at most {limit})"));
        }
        let (m, om) = l.uint("m", 24)?;
        if m == 0 {
            return err(&om, "m must be positive");
        }
        let (kind, ob) = l.get("basis", "lowest".to_string(), |v| Some(v.to_string()), "")?;
        let basis = match kind.as_str() {
            "lowest" => {
                if m > limit {
                    return err(&om, format!("m = {m} is too large for n = {n} (at most {limit})"));
                }
                BasisSpec::Lowest
            }
            "sector" => {
                let (k2, o2) = l.get("sector_k2", 1i64, |v| v.parse().ok(), "an integer")?;
                let (kmax, o3) = l.get("sector_kmax", 10i64, |v| v.parse().ok(), "an integer")?;
                if k2 < 1 || !grid.keeps(0, k2) {
                    return err(&o2, format!("sector_k2 must be in 1..={}", grid.dealias_band()));
                }
                if kmax < 0 || !grid.keeps(kmax, k2) {
                    return err(&o3, format!("sector_kmax must be in 0..={}", grid.dealias_band()));
                }
                BasisSpec::Sector { k2, kmax }
            }
            _ => return err(&ob, format!("basis: expected lowest or sector, got `{kind}`")),
        };
        let (t_grid, og) = l.get("t_grid", (0.01, t_end.max(0.01), 100), parse_t_grid, "start:stop:count")?;
        let (start, stop, count) = t_grid;
        if !(start > 0.0 && stop >= start && count >= 1 && (count > 1 || start == stop)) {
            return err(&og, "t_grid needs 0 < start <= stop and count >= 1 (count = 1 only when start = stop)");
        }
        if command == Command::JacobiScan && stop > t_end {
            return err(&og, format!("t_grid ends at {stop}, after t_end = {t_end}"));
        }
        let (threshold, ot) = l.float("threshold", 1e-6)?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return err(&ot, "threshold must lie in (0, 1)");
        }
        let (confirm, _) = l.boolean("confirm", true)?;
        let (seed, _) = l.get("seed", 0u64, |v| v.parse().ok(), "a non-negative integer")?;
        let (trials, otr) = l.uint("trials", 100)?;
        if trials == 0 {
            return err(&otr, "trials must be positive");
        }
        let (cpn_n, oc) = l.uint("cpn_n", 2)?;
        if cpn_n < 2 {
            return err(&oc, format!("cpn_n must be at least 2, got {cpn_n}"));
        }
        let (execution, _) = l.get(
            "execution",
            Execution::default(),
            |v| match v {
                "parallel" => Some(Execution::Parallel),
                "sequential" => Some(Execution::Sequential),
                _ => None,
            },
            "parallel or sequential",
        )?;
        let (out, _) = l.get("out", PathBuf::from("out"), |v| (!v.is_empty()).then(|| PathBuf::from(v)), "a path")?;
        Ok(RunConfig {
            command,
            n,
            dt,
            t_end,
            modes,
            harmonic,
            form,
            dealias,
            tracers,
            diagnostics_every,
            diagnostics_basis,
            m,
            basis,
            t_grid,
            threshold,
            confirm,
            seed,
            trials,
            cpn_n,
            execution,
            out,
        })
    }

    /// Scan times, evenly spaced and inclusive.
    pub fn times(&self) -> Vec<f64> {
        let (a, b, c) = self.t_grid;
        if c == 1 {
            return vec![b];
        }
        (0..c).map(|i| a + (b - a) * i as f64 / (c - 1) as f64).collect()
    }

    /// The configuration as parseable `key = value` lines.
    pub fn to_text(&self) -> String {
        let modes: Vec<String> = self.modes.iter().map(|(a, b, c, d)| format!("({a}, {b}, {c:?}, {d:?})")).collect();
        let mut lines = vec![
            format!("command = {}", self.command.name()),
            format!("n = {}", self.n),
            format!("dt = {:?}", self.dt),
            format!("t_end = {:?}", self.t_end),
            format!("modes = [{}]", modes.join(", ")),
            format!("harmonic = ({:?}, {:?})", self.harmonic[0], self.harmonic[1]),
            format!("form = {}", if self.form == Formulation::Direct { "direct" } else { "vorticity" }),
            format!("dealias = {}", self.dealias),
            format!("tracers = {}", self.tracers),
            format!("diagnostics_every = {}", self.diagnostics_every),
            format!("diagnostics_basis = {}", self.diagnostics_basis),
            format!("m = {}", self.m),
        ];
        match self.basis {
            BasisSpec::Lowest => lines.push("basis = lowest".into()),
            BasisSpec::Sector { k2, kmax } => {
                lines.push("basis = sector".into());
                lines.push(format!("sector_k2 = {k2}"));
                lines.push(format!("sector_kmax = {kmax}"));
            }
        }
        let (a, b, c) = self.t_grid;
        lines.extend([
            format!("t_grid = {a:?}:{b:?}:{c}"),
            format!("threshold = {:?}", self.threshold),
            format!("confirm = {}", self.confirm),
            format!("seed = {}", self.seed),
            format!("trials = {}", self.trials),
            format!("cpn_n = {}", self.cpn_n),
            format!("execution = {}", if self.execution == Execution::Parallel { "parallel" } else { "sequential" }),
            format!("out = {}", self.out.display()),
        ]);
        lines.join("\n") + "\n"
    }
}

/// Reads the configuration for a command from optional file text and overrides.
pub fn load(file: Option<(&str, &str)>, sets: &[String], command: Option<Command>) -> Result<RunConfig, ConfigError> {
    let mut raw = match file {
        Some((text, path)) => RawConfig::parse(text, path)?,
        None => RawConfig::default(),
    };
    for s in sets {
        raw.set(s)?;
    }
    let command = match (command, raw.command()) {
        (Some(c), _) => c,
        (None, Some((name, origin))) => match Command::parse(&name) {
            Some(c) => c,
            None => return err(&origin, format!("unknown command `{name}`")),
        },
        (None, None) => return err(&Origin::Default, "no command given"),
    };
    RunConfig::from_raw(&raw, command)
}
