//! Flat `key = value` configuration covering the system, the synthetic
//! scenario, GAN training, the estimators and sweeps.
//!
//! Blank lines and `#` comments are ignored. Lists are comma-separated and
//! integer lists accept inclusive ranges such as `1..16`. Keys left unset take
//! defaults, some derived from other keys: `k_up` spans all subcarriers,
//! `m_dl` all antennas, `k_dl` is `p` spread subcarriers, `d_bar` is half the
//! downlink wavelength, and the GAN and dataset seeds are children of `seed`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sweep::{EstimatorConfigs, SweepSpec};
use super::{parse_scenarios, Axis};
use crate::channel::{noise_power_watts, spread_indices, SystemConfig, SPEED_OF_LIGHT};
use crate::dataset::ScenarioSpec;
use crate::error::{Error, Result};
use crate::estimators::DescentConfig;
use crate::gan::{GanConfig, Realism};
use crate::linalg::child_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Master seed.
    pub seed: u64,
    pub system: SystemConfig,
    pub scenario: ScenarioSpec,
    pub gan: GanConfig,
    pub estimators: EstimatorConfigs,
    pub sweep: SweepSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::parse("", Path::new("<default>")).expect("empty configuration is valid")
    }
}

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.trim().parse::<T>().map_err(|_| format!("cannot parse `{}`", v.trim()))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected a boolean, got `{other}`")),
    }
}

fn parse_floats(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').filter(|t| !t.trim().is_empty()).map(parse_num).collect()
}

fn parse_indices(v: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for tok in v.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.split_once("..") {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse_num(a)?, parse_num(b)?);
                if a > b {
                    return Err(format!("empty range `{tok}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num(tok)?),
        }
    }
    Ok(out)
}

fn parse_triple(v: &str) -> std::result::Result<[f64; 3], String> {
    parse_floats(v)?.try_into().map_err(|_| "expected three comma-separated numbers".to_string())
}

fn render_indices(v: &[usize]) -> String {
    match (v.first(), v.last()) {
        (Some(&a), Some(&b)) if v.len() > 2 && b - a + 1 == v.len() => format!("{a}..{b}"),
        _ => join(v),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn optimizer_name(o: crate::estimators::Optimizer) -> &'static str {
    use crate::estimators::Optimizer::*;
    match o {
        FixedStep => "fixed_step",
        Adam => "adam",
        Backtracking => "backtracking",
        LevenbergMarquardt => "levenberg_marquardt",
    }
}

fn set_descent(d: &mut DescentConfig, field: &str, v: &str) -> Option<std::result::Result<(), String>> {
    let r = match field {
        "optimizer" => v.trim().parse().map(|o| d.optimizer = o).map_err(|e: Error| e.to_string()),
        "lr" => parse_num(v).map(|x| d.lr = x),
        "max_iters" => parse_num(v).map(|x| d.max_iters = x),
        "epsilon" => parse_num(v).map(|x| d.epsilon = x),
        "window" => parse_num(v).map(|x| d.window = x),
        "restarts" => parse_num(v).map(|x| d.restarts = x),
        "candidates" => parse_num(v).map(|x| d.candidates = x),
        "anneal" => parse_num(v).map(|x| d.anneal = x),
        _ => return None,
    };
    Some(r)
}

fn render_descent(out: &mut String, prefix: &str, d: &DescentConfig) {
    let _ = writeln!(out, "{prefix}.optimizer = {}", optimizer_name(d.optimizer));
    let _ = writeln!(out, "{prefix}.lr = {}", d.lr);
    let _ = writeln!(out, "{prefix}.max_iters = {}", d.max_iters);
    let _ = writeln!(out, "{prefix}.epsilon = {}", d.epsilon);
    let _ = writeln!(out, "{prefix}.window = {}", d.window);
    let _ = writeln!(out, "{prefix}.restarts = {}", d.restarts);
    let _ = writeln!(out, "{prefix}.candidates = {}", d.candidates);
    let _ = writeln!(out, "{prefix}.anneal = {}", d.anneal);
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Parses configuration text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self {
            seed: 0,
            system: SystemConfig::default(),
            scenario: ScenarioSpec::default(),
            gan: GanConfig::default(),
            estimators: EstimatorConfigs::default(),
            sweep: SweepSpec::default(),
        };
        let mut seen = HashSet::new();
        let mut pending = Pending::default();
        for (i, raw) in text.lines().enumerate() {
            let err = |msg: String| Error::Parse { path: origin.to_path_buf(), line: i + 1, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            pending.set(&mut cfg, key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        if seen.contains("sigma_n2") && seen.contains("noise_psd_dbm_hz") {
            return Err(Error::Config("set either sigma_n2 or noise_psd_dbm_hz, not both".into()));
        }
        cfg.derive(&seen, &pending);
        cfg.validate()?;
        Ok(cfg)
    }

}

/// Keys whose effect depends on others, resolved after the whole file is read.
#[derive(Default)]
struct Pending {
    noise_psd_dbm_hz: Option<f64>,
}

impl Pending {
    fn set(&mut self, cfg: &mut ExperimentConfig, key: &str, v: &str) -> std::result::Result<(), String> {
        let (sys, sc, gan) = (&mut cfg.system, &mut cfg.scenario, &mut cfg.gan);
        match key {
            "seed" => cfg.seed = parse_num(v)?,
            "snr_db" => cfg.sweep.snr_db = parse_num(v)?,
            "m" => sys.m = parse_num(v)?,
            "k" => sys.k = parse_num(v)?,
            "l" => sys.l = parse_num(v)?,
            "bandwidth_hz" => sys.bandwidth_hz = parse_num(v)?,
            "f_up_hz" => sys.f_up_hz = parse_num(v)?,
            "f_dl_hz" => sys.f_dl_hz = parse_num(v)?,
            "d_bar" => sys.d_bar = parse_num(v)?,
            "p_t" => sys.p_t = parse_num(v)?,
            "sigma_n2" => sys.sigma_n2 = parse_num(v)?,
            "noise_psd_dbm_hz" => self.noise_psd_dbm_hz = Some(parse_num(v)?),
            "k_up" => sys.k_up = parse_indices(v)?,
            "k_dl" => sys.k_dl = parse_indices(v)?,
            "m_dl" => sys.m_dl = parse_indices(v)?,
            "p" => sys.p = parse_num(v)?,
            "users" => sc.user_count = parse_num(v)?,
            "delay_spread_max" => sc.delay_spread_max = parse_num(v)?,
            "cluster_count" => sc.cluster_count = parse_num(v)?,
            "cluster_radius_m" => sc.cluster_radius_m = parse_num(v)?,
            "angle_spread" => sc.angle_spread = parse_num(v)?,
            "gain_decay_s" => sc.gain_decay_s = parse_num(v)?,
            "alpha_dl_rel_err" => sc.alpha_dl_rel_err = parse_num(v)?,
            "room_m" => sc.room_m = parse_triple(v)?,
            "bs_position_m" => sc.bs_position_m = parse_triple(v)?,
            "ue_height_m" => sc.ue_height_m = parse_num(v)?,
            "dataset.seed" => sc.seed = parse_num(v)?,
            "gan.latent_dim" => gan.d = parse_num(v)?,
            "gan.g_hidden" => gan.g_hidden = parse_indices(v)?,
            "gan.e_hidden" => gan.e_hidden = parse_indices(v)?,
            "gan.d_hidden" => gan.d_hidden = parse_indices(v)?,
            "gan.batch" => gan.batch = parse_num(v)?,
            "gan.epochs" => gan.epochs = parse_num(v)?,
            "gan.lr" => gan.lr = parse_num(v)?,
            "gan.beta1" => gan.beta1 = parse_num(v)?,
            "gan.beta2" => gan.beta2 = parse_num(v)?,
            "gan.lambda1" => gan.lambda1 = parse_num(v)?,
            "gan.lambda2" => gan.lambda2 = parse_num(v)?,
            "gan.realism" => gan.realism = v.trim().parse::<Realism>().map_err(|e| e.to_string())?,
            "gan.dropout" => gan.dropout = parse_num(v)?,
            "gan.leaky_slope" => gan.leaky_slope = parse_num(v)?,
            "gan.seed" => gan.seed = parse_num(v)?,
            "r2f2.tau_max" => cfg.estimators.r2f2.tau_max = parse_num(v)?,
            "sweep.axis" => cfg.sweep.axis = v.parse::<Axis>().map_err(|e| e.to_string())?,
            "sweep.values" => cfg.sweep.values = parse_floats(v)?,
            "sweep.scenarios" => cfg.sweep.scenarios = parse_scenarios(v).map_err(|e| e.to_string())?,
            "sweep.trials" => cfg.sweep.trials = parse_num(v)?,
            "sweep.sigma_phi_deg" => cfg.sweep.sigma_phi_deg = parse_num(v)?,
            "sweep.ser_symbols" => cfg.sweep.ser_symbols = parse_num(v)?,
            "sweep.record_seconds" => cfg.sweep.record_seconds = parse_bool(v)?,
            _ => {
                let est = &mut cfg.estimators;
                let hit = match key.split_once('.') {
                    Some(("up_gan", f)) => set_descent(&mut est.up_gan, f, v),
                    Some(("dl_phase", f)) => set_descent(&mut est.dl_phase, f, v),
                    Some(("r2f2", f)) => set_descent(&mut est.r2f2.up, f, v),
                    _ => None,
                };
                return hit.unwrap_or_else(|| Err("unknown key".to_string()));
            }
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// Fills keys that default from others.
    fn derive(&mut self, seen: &HashSet<String>, pending: &Pending) {
        let set = |k: &str| seen.contains(k);
        let sys = &mut self.system;
        if let Some(psd) = pending.noise_psd_dbm_hz {
            sys.sigma_n2 = noise_power_watts(psd, sys.bandwidth_hz);
        }
        if !set("k_up") {
            sys.k_up = (1..=sys.k).collect();
        }
        if !set("m_dl") {
            sys.m_dl = (1..=sys.m).collect();
        }
        if !set("p") && !set("k_dl") {
            sys.p = sys.k;
        }
        if !set("k_dl") {
            sys.k_dl = spread_indices(sys.k, sys.p);
        }
        if !set("d_bar") {
            sys.d_bar = 0.5 * SPEED_OF_LIGHT / sys.f_dl_hz;
        }
        self.scenario.l = sys.l;
        self.scenario.carrier_hz = sys.f_up_hz;
        self.scenario.bandwidth_hz = sys.bandwidth_hz;
        if !set("dataset.seed") {
            self.scenario.seed = child_seed(self.seed, "dataset");
        }
        self.gan.n = 3 * sys.l;
        if !set("gan.seed") {
            self.gan.seed = child_seed(self.seed, "gan");
        }
        self.estimators.r2f2.dl = self.estimators.dl_phase.clone();
        if set("sweep.axis") && !set("sweep.values") {
            self.sweep.values = self.sweep.axis.default_values();
        }
        self.sweep.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.scenario.validate()?;
        self.gan.validate()?;
        self.estimators.up_gan.validate()?;
        self.estimators.dl_phase.validate()?;
        self.estimators.r2f2.up.validate()?;
        self.sweep.validate()
    }

    /// Every key with its current value, in a form [`ExperimentConfig::parse`] reads back.
    pub fn render(&self) -> String {
        let (sys, sc, gan, sw) = (&self.system, &self.scenario, &self.gan, &self.sweep);
        let mut o = String::new();
        let _ = writeln!(o, "seed = {}", self.seed);
        let _ = writeln!(o, "snr_db = {}", sw.snr_db);
        let _ = writeln!(o, "\n# system");
        let _ = writeln!(o, "m = {}\nk = {}\nl = {}", sys.m, sys.k, sys.l);
        let _ = writeln!(o, "bandwidth_hz = {}\nf_up_hz = {}\nf_dl_hz = {}", sys.bandwidth_hz, sys.f_up_hz, sys.f_dl_hz);
        let _ = writeln!(o, "d_bar = {}\np_t = {}\nsigma_n2 = {}", sys.d_bar, sys.p_t, sys.sigma_n2);
        let _ = writeln!(o, "k_up = {}", render_indices(&sys.k_up));
        let _ = writeln!(o, "k_dl = {}", render_indices(&sys.k_dl));
        let _ = writeln!(o, "m_dl = {}", render_indices(&sys.m_dl));
        let _ = writeln!(o, "p = {}", sys.p);
        let _ = writeln!(o, "\n# synthetic scenario");
        let _ = writeln!(o, "users = {}\ndelay_spread_max = {}", sc.user_count, sc.delay_spread_max);
        let _ = writeln!(o, "cluster_count = {}\ncluster_radius_m = {}", sc.cluster_count, sc.cluster_radius_m);
        let _ = writeln!(o, "angle_spread = {}\ngain_decay_s = {}", sc.angle_spread, sc.gain_decay_s);
        let _ = writeln!(o, "alpha_dl_rel_err = {}", sc.alpha_dl_rel_err);
        let _ = writeln!(o, "room_m = {}\nbs_position_m = {}", join(&sc.room_m), join(&sc.bs_position_m));
        let _ = writeln!(o, "ue_height_m = {}\ndataset.seed = {}", sc.ue_height_m, sc.seed);
        let _ = writeln!(o, "\n# GAN");
        let _ = writeln!(o, "gan.latent_dim = {}", gan.d);
        let _ = writeln!(o, "gan.g_hidden = {}", join(&gan.g_hidden));
        let _ = writeln!(o, "gan.e_hidden = {}", join(&gan.e_hidden));
        let _ = writeln!(o, "gan.d_hidden = {}", join(&gan.d_hidden));
        let _ = writeln!(o, "gan.batch = {}\ngan.epochs = {}\ngan.lr = {}", gan.batch, gan.epochs, gan.lr);
        let _ = writeln!(o, "gan.beta1 = {}\ngan.beta2 = {}", gan.beta1, gan.beta2);
        let _ = writeln!(o, "gan.lambda1 = {}\ngan.lambda2 = {}", gan.lambda1, gan.lambda2);
        let realism = match gan.realism {
            Realism::Reward => "reward",
            Realism::Penalty => "penalty",
        };
        let _ = writeln!(o, "gan.realism = {realism}");
        let _ = writeln!(o, "gan.dropout = {}\ngan.leaky_slope = {}\ngan.seed = {}", gan.dropout, gan.leaky_slope, gan.seed);
        let _ = writeln!(o, "\n# estimators");
        render_descent(&mut o, "up_gan", &self.estimators.up_gan);
        render_descent(&mut o, "dl_phase", &self.estimators.dl_phase);
        render_descent(&mut o, "r2f2", &self.estimators.r2f2.up);
        let _ = writeln!(o, "r2f2.tau_max = {}", self.estimators.r2f2.tau_max);
        let _ = writeln!(o, "\n# sweep");
        let _ = writeln!(o, "sweep.axis = {}\nsweep.values = {}", sw.axis, join(&sw.values));
        let names: Vec<&str> = sw.scenarios.iter().map(|s| s.name()).collect();
        let _ = writeln!(o, "sweep.scenarios = {}", names.join(", "));
        let _ = writeln!(o, "sweep.trials = {}\nsweep.sigma_phi_deg = {}", sw.trials, sw.sigma_phi_deg);
        let _ = writeln!(o, "sweep.ser_symbols = {}\nsweep.record_seconds = {}", sw.ser_symbols, sw.record_seconds);
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Scenario;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn defaults_match_component_defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.system, SystemConfig::default());
        assert_eq!(c.estimators, EstimatorConfigs::default());
        assert_eq!(c.gan.seed, child_seed(0, "gan"));
        assert_eq!(c.scenario.seed, child_seed(0, "dataset"));
    }

    #[test]
    fn render_round_trips() {
        let text = "seed = 7\nm = 32\nk = 8\np = 4\nsweep.axis = p\ngan.realism = penalty\nup_gan.optimizer = levenberg_marquardt\n";
        let c = parse(text).unwrap();
        assert_eq!(parse(&c.render()).unwrap(), c);
        assert_eq!(ExperimentConfig::default(), parse(&ExperimentConfig::default().render()).unwrap());
    }

    #[test]
    fn derived_keys_follow_their_sources() {
        let c = parse("m = 16\nk = 8\np = 2\nf_dl_hz = 3e9\nl = 3").unwrap();
        assert_eq!(c.system.m_dl, (1..=16).collect::<Vec<_>>());
        assert_eq!(c.system.k_up, (1..=8).collect::<Vec<_>>());
        assert_eq!(c.system.k_dl, vec![1, 5]);
        assert!((c.system.d_bar - 0.05).abs() < 1e-4);
        assert_eq!((c.gan.n, c.scenario.l), (9, 3));
        let c = parse("sweep.axis = sigma_phi_deg").unwrap();
        assert_eq!(c.sweep.values, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn lists_ranges_and_comments() {
        let c = parse("# comment\nm_dl = 1..4, 9  # trailing\nsweep.scenarios = dl_gan, UP-LMMSE\nsweep.values = -5, 0.5").unwrap();
        assert_eq!(c.system.m_dl, vec![1, 2, 3, 4, 9]);
        assert_eq!(c.sweep.scenarios, vec![Scenario::DlGan, Scenario::UpLmmse]);
        assert_eq!(c.sweep.values, vec![-5.0, 0.5]);
    }

    #[test]
    fn noise_from_density() {
        let c = parse("noise_psd_dbm_hz = -170\nbandwidth_hz = 1e6").unwrap();
        assert!((c.system.sigma_n2 - 1e-17 * 1e-3 * 1e6).abs() < 1e-30);
        assert!(parse("noise_psd_dbm_hz = -170\nsigma_n2 = 1").is_err());
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [("m = 4\nbogus = 1", 2), ("\n\nm = four", 3), ("m = 4\nm = 8", 2), ("just text", 1)] {
            match parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(parse("sweep.scenarios = DL-Nope").is_err());
        assert!(parse("sweep.trials = 0").is_err());
    }
}
