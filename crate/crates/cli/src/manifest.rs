use std::f64::consts::TAU;

use sha2::{Digest, Sha256};
use tofu::powder::OrientationSet;
use tofu::rfgen::TofuParams;
use tofu::spinsys::{distance_from_coupling, SpinSystem};

/// Run metadata written as `# key = value` lines at the top of every output file.
/// Wall time is left out so that identical runs give identical files.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(command: &str, config_text: Option<&str>) -> Self {
        let mut m = Self::default();
        m.push("tool", format!("tofu {}", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m.push("config_sha256", config_text.map_or_else(|| "none".to_string(), sha256_hex));
        m
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
    }

    pub fn spinning(&mut self, omega_r: f64) {
        self.push("spinning", format!("{} Hz ({} rad/s)", omega_r / TAU, omega_r));
    }

    pub fn system(&mut self, sys: &SpinSystem<f64>) {
        for s in &sys.spins {
            let mut v = format!(
                "shift {} Hz ({} rad/s), gamma {} rad/s/T",
                s.iso_shift / TAU,
                s.iso_shift,
                s.gyromagnetic_ratio
            );
            if s.csa_aniso != 0.0 {
                let e = &s.csa_euler;
                v += &format!(
                    ", csa {} Hz ({} rad/s) eta {} euler_deg [{}, {}, {}]",
                    s.csa_aniso / TAU,
                    s.csa_aniso,
                    s.csa_asymmetry,
                    e.alpha.to_degrees(),
                    e.beta.to_degrees(),
                    e.gamma.to_degrees()
                );
            }
            self.push(format!("spin.{}", s.label), v);
        }
        self.push("s_spin", &sys.spins[sys.s_spin].label);
        for d in &sys.dipolar {
            let (a, b) = (&sys.spins[d.spin_a], &sys.spins[d.spin_b]);
            let mut v = format!("b {} Hz ({} rad/s)", d.b_is / TAU, d.b_is);
            if let Ok(r) = distance_from_coupling(d.b_is, a.gyromagnetic_ratio, b.gyromagnetic_ratio) {
                v += &format!(", r {} A", r * 1e10);
            }
            let e = &d.pc_euler;
            v += &format!(", euler_deg [{}, {}, {}]", e.alpha.to_degrees(), e.beta.to_degrees(), e.gamma.to_degrees());
            self.push(format!("dipolar.{}-{}", a.label, b.label), v);
        }
        for j in &sys.scalar {
            let v = format!("J {} Hz ({} rad/s)", j.j, j.j * TAU);
            self.push(format!("scalar.{}-{}", sys.spins[j.spin_a].label, sys.spins[j.spin_b].label), v);
        }
    }

    pub fn tofu(&mut self, p: &TofuParams<f64>) {
        let wr = p.omega_r;
        self.spinning(wr);
        self.push("tofu.b", format!("{} wr = {} Hz ({} rad/s)", p.b_field / wr, p.b_field / TAU, p.b_field));
        self.push("tofu.c", format!("{} wr = {} Hz ({} rad/s)", p.c_field / wr, p.c_field / TAU, p.c_field));
        self.push("tofu.steps_per_element", p.steps_per_element);
        self.push("tofu.dwell", format!("{} s", p.dwell()));
    }

    pub fn powder(&mut self, set: &OrientationSet<f64>) {
        self.push("powder", format!("{} ({} orientations)", set.label(), set.len()));
    }
}
