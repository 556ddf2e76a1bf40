use std::f64::consts::TAU;
use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tofu::analysis::{
    effective_hamiltonian, fit_distance, fresnel_chart, truncation_check, FitOptions, Quadrature, Thresholds, Tier,
};
use tofu::config::{nucleus_gamma, ChartConfig, RunConfig};
use tofu::powder::PowderSpec;
use tofu::propagator::Detection;
use tofu::rfgen::{format_waveform, postc7_waveform, tofu_waveform, Condition, Playback, ShapeFormat, TofuParams};
use tofu::sequence::{
    recoupling_timeline, run_dephasing_series, simulate, DephasingCurve, Experiment, Layout, RunOptions,
};
use tofu::spinsys::SpinSystem;
use tofu::{Error, Result};

use crate::manifest::Manifest;
use crate::table::Table;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub powder: Option<PowderSpec>,
    pub condition: Option<Condition>,
    pub detect: Option<Detection>,
}

impl Globals {
    fn load(&self) -> Result<Option<(String, RunConfig)>> {
        match &self.config {
            None => Ok(None),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                let cfg = RunConfig::parse(&text)?;
                Ok(Some((text, cfg)))
            }
        }
    }

    fn require(&self, command: &str) -> Result<(String, RunConfig)> {
        self.load()?.ok_or_else(|| Error::Config(format!("{command} needs --config PATH")))
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn n_list_times(n_list: &[usize], omega_r: f64) -> (Vec<f64>, Vec<f64>) {
    let tr = TAU / omega_r;
    n_list.iter().map(|&n| (16.0 * n as f64 * tr, 16.0 * n as f64)).unzip()
}

#[derive(Debug, Clone, Default)]
pub struct ShapeArgs {
    pub b_over_wr: Option<f64>,
    pub c_over_wr: Option<f64>,
    pub spinning_hz: Option<f64>,
    pub steps: Option<usize>,
    pub format: Option<ShapeFormat>,
    pub file: String,
}

pub fn shape(g: &Globals, a: &ShapeArgs) -> Result<PathBuf> {
    let loaded = g.load()?;
    let cfg = loaded.as_ref().map(|(_, c)| c);
    let spinning = a.spinning_hz.or(cfg.map(|c| c.spinning_hz)).unwrap_or(20_000.0);
    let b_over = a.b_over_wr.or(cfg.map(|c| c.tofu.b_over_wr)).unwrap_or(3.0);
    let c_over = match (a.c_over_wr, g.condition) {
        (Some(c), _) => c,
        (None, Some(c)) => c.c_over_wr(),
        (None, None) => match cfg {
            Some(cfg) => cfg.condition()?.map(Condition::c_over_wr).or(cfg.tofu.c_over_wr).unwrap_or(0.25),
            None => 0.25,
        },
    };
    let steps = a.steps.or(cfg.map(|c| c.tofu.steps)).unwrap_or(200);
    if !(spinning > 0.0) {
        return Err(Error::Config("spinning rate must be positive".into()));
    }
    let wr = TAU * spinning;
    let p = TofuParams::new(b_over * wr, c_over * wr, wr, steps)?;
    for w in p.warnings() {
        eprintln!("warning: {w}");
    }
    let wave = tofu_waveform(&p)?;
    let format = a.format.unwrap_or(ShapeFormat::TwoColumn);
    let mut m = Manifest::new("shape", loaded.as_ref().map(|(t, _)| t.as_str()));
    m.tofu(&p);
    m.push(
        "format",
        match format {
            ShapeFormat::TwoColumn => "amplitude_percent phase_deg (offset folded into phase)",
            ShapeFormat::ThreeColumn => "amplitude_percent phase_deg offset_hz",
        },
    );
    g.write(&a.file, &format_waveform(&wave, format, m.pairs()))
}

fn detection(g: &Globals, cfg: &RunConfig) -> Result<Detection> {
    g.detect.map_or_else(|| cfg.detection(), Ok)
}

pub fn dephase(g: &Globals) -> Result<PathBuf> {
    let (text, cfg) = g.require("dephase")?;
    let sys = cfg.spin_system::<f64>()?;
    let powder = cfg.orientations::<f64>(g.powder.as_ref())?;
    let params = cfg.experiment_params(&sys, g.condition)?;
    for w in params.tofu.warnings() {
        eprintln!("warning: {w}");
    }
    let exp = Experiment::new(params, &sys)?;
    let opts =
        RunOptions { resolution: cfg.resolution()?, detection: detection(g, &cfg)?, lambda: cfg.experiment.lambda_s };
    let n_list = &cfg.experiment.n_list;
    if n_list.is_empty() {
        return Err(Error::Config("experiment.n_list is empty".into()));
    }
    let curves = run_dephasing_series(&sys, &exp, &powder, n_list, &[Layout::Main, Layout::Reference], &opts)?;

    let mut m = Manifest::new("dephase", Some(&text));
    m.system(&sys);
    m.tofu(&params.tofu);
    m.push(
        "selective",
        format!("gaussian {} s, truncation {}", params.selective.duration, params.selective.truncation),
    );
    m.push("hard_pulse", format!("{:?}", params.hard_pulse));
    m.push("playback", format!("{:?}", params.playback));
    m.push("detection", format!("{:?}", opts.detection));
    m.push("substeps_per_rotor", opts.resolution.substeps_per_rotor);
    m.push("lambda", format!("{} 1/s", opts.lambda));
    m.powder(&powder);
    m.push("n_list", format!("{n_list:?}"));
    g.write("dephasing.csv", &dephasing_table(&curves[0], &curves[1])?.render(&m.render()))
}

fn dephasing_table(main: &DephasingCurve<f64>, reference: &DephasingCurve<f64>) -> Result<Table> {
    let mut t = Table::new();
    t.push("T_seconds", main.t_values.clone());
    t.push("T_rotor_periods", main.rotor_periods.clone());
    for (i, label) in main.labels.iter().enumerate() {
        let (sm, sr) = (&main.signals[i], &reference.signals[i]);
        let eta = tofu::analysis::eta(sr, sm, tofu::analysis::ETA_FLOOR)?;
        t.push(format!("main_{label}"), sm.clone());
        t.push(format!("reference_{label}"), sr.clone());
        t.push(format!("eta_{label}"), eta.into_iter().map(|e| e.unwrap_or(f64::NAN)).collect());
    }
    Ok(t)
}

fn chart_settings(cfg: Option<&RunConfig>) -> Result<(ChartConfig, (f64, f64))> {
    let chart = cfg.map(|c| c.chart.clone()).unwrap_or_default();
    let gammas = (nucleus_gamma(&chart.nuclei[0])?, nucleus_gamma(&chart.nuclei[1])?);
    Ok((chart, gammas))
}

pub fn chart(g: &Globals) -> Result<PathBuf> {
    let loaded = g.load()?;
    let cfg = loaded.as_ref().map(|(_, c)| c);
    let (ch, gammas) = chart_settings(cfg)?;
    if !(ch.r_min_a > 0.0 && ch.r_max_a >= ch.r_min_a && ch.r_step_a > 0.0) {
        return Err(Error::Config("chart grid must satisfy 0 < r_min_a <= r_max_a and r_step_a > 0".into()));
    }
    let count = ((ch.r_max_a - ch.r_min_a) / ch.r_step_a + 1e-9).floor() as usize + 1;
    let distances: Vec<f64> = (0..count).map(|i| ch.r_min_a + i as f64 * ch.r_step_a).collect();
    let spinning = cfg.map_or(20_000.0, |c| c.spinning_hz);
    let n_list = cfg.map_or_else(|| (1..=15).collect(), |c| c.experiment.n_list.clone());
    let (t, periods) = n_list_times(&n_list, TAU * spinning);
    let quad = Quadrature::default();
    let chart = fresnel_chart(&distances, &t, gammas, &quad)?;

    let mut m = Manifest::new("chart", loaded.as_ref().map(|(t, _)| t.as_str()));
    m.spinning(TAU * spinning);
    m.push("nuclei", format!("{} {}", ch.nuclei[0], ch.nuclei[1]));
    m.push("distances", format!("{} to {} A step {}", ch.r_min_a, ch.r_max_a, ch.r_step_a));
    m.push("quadrature", format!("{} beta x gamma nodes", quad.len()));
    m.push("n_list", format!("{n_list:?}"));
    let mut table = Table::new();
    table.push("T_seconds", t);
    table.push("T_rotor_periods", periods);
    for (r, curve) in chart.distances.iter().zip(chart.curves) {
        table.push(format!("eta_{r:.2}A"), curve);
    }
    g.write("chart.csv", &table.render(&m.render()))
}

pub fn fit(g: &Globals, input: &Path, column: Option<&str>) -> Result<(PathBuf, String)> {
    let loaded = g.load()?;
    let cfg = loaded.as_ref().map(|(_, c)| c);
    let (ch, gammas) = chart_settings(cfg)?;
    let text =
        std::fs::read_to_string(input).map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    let table = Table::parse(&text)?;
    let t = table.column("T_seconds").ok_or_else(|| Error::Config("input has no T_seconds column".into()))?;
    let names: Vec<&str> = match column {
        Some(c) => vec![c],
        None => table.names.iter().map(String::as_str).filter(|n| n.starts_with("eta_")).collect(),
    };
    if names.is_empty() {
        return Err(Error::Config("input has no eta_ columns".into()));
    }
    let opts = FitOptions { r_min: ch.r_min_a, r_max: ch.r_max_a, ..FitOptions::default() };
    let quad = Quadrature::default();

    let mut m = Manifest::new("fit", loaded.as_ref().map(|(t, _)| t.as_str()));
    m.push("input_sha256", crate::manifest::sha256_hex(&text));
    m.push("nuclei", format!("{} {}", ch.nuclei[0], ch.nuclei[1]));
    m.push("search", format!("{} to {} A step {}", opts.r_min, opts.r_max, opts.step));
    let mut out = m.render();
    for name in names {
        let col = table.column(name).ok_or_else(|| Error::Config(format!("input has no column '{name}'")))?;
        let eta: Vec<Option<f64>> = col.iter().map(|&v| v.is_finite().then_some(v)).collect();
        let f = fit_distance(&eta, t, gammas, &quad, opts)?;
        let _ = writeln!(out, "\n[{name}]");
        let _ = writeln!(out, "r_angstrom = {:.4}", f.r);
        let _ = writeln!(out, "uncertainty_angstrom = {:.4}", f.uncertainty);
        let _ = writeln!(out, "residual = {:e}", f.residual);
        let _ = writeln!(out, "n_points = {}", f.n_points);
        let _ = writeln!(out, "no_coupling = {}", f.no_coupling);
    }
    Ok((g.write("fit.txt", &out)?, out))
}

fn tier_name(t: Tier) -> &'static str {
    match t {
        Tier::Pass => "pass",
        Tier::Warn => "warn",
        Tier::Fail => "fail",
    }
}

pub fn check(g: &Globals) -> Result<(PathBuf, String)> {
    let (text, cfg) = g.require("check")?;
    let sys = cfg.spin_system::<f64>()?;
    let tofu = cfg.tofu_params::<f64>(g.condition)?;
    let powder = cfg.orientations::<f64>(g.powder.as_ref())?;
    let diag = truncation_check(&sys, &tofu, &powder, Thresholds::default());

    let mut m = Manifest::new("check", Some(&text));
    m.system(&sys);
    m.tofu(&tofu);
    m.powder(&powder);
    let mut out = m.render();
    let _ = writeln!(out, "\n[truncation]");
    let _ = writeln!(out, "worst = \"{}\"", tier_name(diag.worst()));
    let _ = writeln!(out, "thresholds = {{ warn = {}, fail = {} }}", diag.thresholds.warn, diag.thresholds.fail);
    for mg in &diag.margins {
        let _ = writeln!(
            out,
            "\"{}.{}\" = {{ margin = {}, tier = \"{}\" }}",
            sys.spins[mg.spin].label,
            mg.branch,
            if mg.value.is_finite() { format!("{:.3}", mg.value) } else { "inf".into() },
            tier_name(mg.tier)
        );
    }
    let res: Vec<String> = diag.resonances.iter().map(|(d, k, mm)| format!("[{d}, {k}, {mm}]")).collect();
    let _ = writeln!(out, "resonances_dm_k_m = [{}]", res.join(", "));
    let warnings: Vec<String> = tofu.warnings().iter().map(|w| format!("\"{w}\"")).collect();
    let _ = writeln!(out, "warnings = [{}]", warnings.join(", "));

    if let Some(condition) = tofu.condition() {
        let crystal = cfg.crystal::<f64>();
        let h = effective_hamiltonian(&sys, &crystal, condition)?;
        let e = &crystal;
        let _ = writeln!(out, "\n[effective_hamiltonian]");
        let _ = writeln!(out, "condition = \"{}\"", h.condition_label());
        let _ = writeln!(
            out,
            "crystal_deg = [{}, {}, {}]",
            e.alpha.to_degrees(),
            e.beta.to_degrees(),
            e.gamma.to_degrees()
        );
        for (k, s) in h.shifts.iter().enumerate() {
            let _ = writeln!(out, "\"shift_hz.{}\" = {:.4}", sys.spins[k].label, s / TAU);
        }
        for (a, b, d) in &h.ising {
            let _ =
                writeln!(out, "\"ising_2IzSz_hz.{}-{}\" = {:.4}", sys.spins[*a].label, sys.spins[*b].label, d / TAU);
        }
        for (a, b, d) in &h.planar {
            let _ = writeln!(out, "\"planar_hz.{}-{}\" = {:.4}", sys.spins[*a].label, sys.spins[*b].label, d / TAU);
        }
    }
    Ok((g.write("check.txt", &out)?, out))
}

/// Three ¹³C spins of the truncation demonstration, single crystal (0, 45, 0).
pub const FIG1B_CONFIG: &str = r#"s_spin = "I1"
spinning_hz = 20000.0

[[spin]]
label = "I1"
shift_hz = -12000.0

[[spin]]
label = "I2"
shift_hz = 0.0

[[spin]]
label = "I3"
shift_hz = -15500.0

[[dipolar]]
spins = ["I1", "I2"]
b_hz = -2100.0

[[dipolar]]
spins = ["I1", "I3"]
b_hz = -300.0
euler_deg = [0.0, 90.0, 0.0]

[tofu]
b_over_wr = 3.0
condition = "quarter"

[experiment]
n_list = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]
detect = "abs"

[powder]
scheme = "single"
crystal_deg = [0.0, 45.0, 0.0]
"#;

/// POST-C7 samples per 90° of nutation.
const POSTC7_PER_QUARTER: usize = 50;

pub fn fig1b(g: &Globals) -> Result<PathBuf> {
    let cfg = RunConfig::parse(FIG1B_CONFIG)?;
    let sys = cfg.spin_system::<f64>()?;
    let control = sys.without_spin(index(&sys, "I2"))?;
    let crystal = cfg.orientations::<f64>(None)?;
    let detection = detection(g, &cfg)?;
    let n_list = cfg.experiment.n_list.clone();
    let resolution = cfg.resolution()?;
    let wr = cfg.omega_r::<f64>();

    let tofu_curve = |s: &SpinSystem<f64>, spins: &[&str]| -> Result<Vec<Vec<f64>>> {
        let exp = Experiment::new(cfg.experiment_params(s, g.condition)?, s)?;
        let opts = RunOptions { resolution, detection, lambda: 0.0 };
        let c = run_dephasing_series(s, &exp, &crystal, &n_list, &[Layout::Main], &opts)?;
        Ok(spins.iter().map(|l| c[0].signal(index(s, l)).unwrap().to_vec()).collect())
    };
    let pc7 = Arc::new(postc7_waveform(wr, POSTC7_PER_QUARTER)?);
    let timelines: Vec<_> = n_list.iter().map(|&n| recoupling_timeline(&pc7, Playback::Explicit, 8 * n)).collect();
    let postc7 = |s: &SpinSystem<f64>, spins: &[&str]| -> Result<Vec<Vec<f64>>> {
        let idx: Vec<usize> = spins.iter().map(|l| index(s, l)).collect();
        let v = simulate(s, &crystal, wr, resolution, detection, &timelines, &idx)?;
        Ok((0..idx.len()).map(|k| v.iter().map(|row| row[k]).collect()).collect())
    };

    let tofu3 = tofu_curve(&sys, &["I2", "I3"])?;
    let tofu2 = tofu_curve(&control, &["I3"])?;
    let pc3 = postc7(&sys, &["I2", "I3"])?;
    let pc2 = postc7(&control, &["I3"])?;

    let (t, periods) = n_list_times(&n_list, wr);
    let mut table = Table::new();
    table.push("T_seconds", t);
    table.push("T_rotor_periods", periods);
    table.push("tofu_I2", tofu3[0].clone());
    table.push("tofu_I3", tofu3[1].clone());
    table.push("tofu_control_I3", tofu2[0].clone());
    table.push("postc7_I2", pc3[0].clone());
    table.push("postc7_I3", pc3[1].clone());
    table.push("postc7_control_I3", pc2[0].clone());

    let mut m = Manifest::new("fig1b", Some(FIG1B_CONFIG));
    m.system(&sys);
    m.tofu(&cfg.tofu_params(g.condition)?);
    m.push("tofu_layout", "main");
    m.push("postc7", format!("7 elements per 2 rotor periods, nutation 7 wr, {POSTC7_PER_QUARTER} samples per 90 deg"));
    m.push("control", "I2 removed");
    m.push("detection", format!("{detection:?}"));
    m.push("substeps_per_rotor", resolution.substeps_per_rotor);
    m.powder(&crystal);
    g.write("fig1b.csv", &table.render(&m.render()))
}

fn index(s: &SpinSystem<f64>, label: &str) -> usize {
    s.spins.iter().position(|x| x.label == label).expect("label present")
}
