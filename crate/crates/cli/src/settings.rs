//! Config-file keys of each subcommand. Flags are inserted into the parsed
//! file before these run, so a flag always wins over the file.

use std::collections::BTreeMap;

use georeg_core::config::{ConfigError, KeyValues};
use georeg_core::eval::EvalConfig;
use georeg_core::filter::{FilterConfig, InitConfig};
use georeg_core::graph::{OptimizeConfig, DEFAULT_ANCHOR_SIGMA, DEFAULT_GPS_SIGMA, DEFAULT_GPS_SPACING};
use georeg_core::{MapOrigin, Point2};

fn check(key: &str, ok: bool, value: impl std::fmt::Display) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::value(key, format!("{value} is out of range")))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn optimize_keys(kv: &KeyValues, c: &mut OptimizeConfig) -> Result<(), ConfigError> {
    kv.set("max_iter", &mut c.max_iter)?;
    kv.set("chi2_rel_tol", &mut c.chi2_rel_tol)?;
    kv.set("lm_initial_lambda", &mut c.lm_initial_lambda)?;
    check("max_iter", c.max_iter > 0, c.max_iter)?;
    check("chi2_rel_tol", c.chi2_rel_tol >= 0.0 && c.chi2_rel_tol.is_finite(), c.chi2_rel_tol)?;
    check("lm_initial_lambda", positive(c.lm_initial_lambda), c.lm_initial_lambda)
}

fn snapshot_optimize(out: &mut BTreeMap<String, String>, c: &OptimizeConfig) {
    out.insert("max_iter".into(), c.max_iter.to_string());
    out.insert("chi2_rel_tol".into(), c.chi2_rel_tol.to_string());
    out.insert("lm_initial_lambda".into(), c.lm_initial_lambda.to_string());
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub filter: FilterConfig,
    pub init: InitConfig,
}

impl FilterSettings {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut filter = FilterConfig::default();
        let mut init = InitConfig::default();
        kv.set("gps_sigma", &mut filter.gps_sigma)?;
        kv.set("sigma_v", &mut filter.noise.sigma_v)?;
        kv.set("sigma_omega", &mut filter.noise.sigma_omega)?;
        kv.set("gate_confidence", &mut filter.gate_confidence)?;
        kv.set("ukf_alpha", &mut filter.ukf.alpha)?;
        kv.set("ukf_beta", &mut filter.ukf.beta)?;
        kv.set("ukf_kappa", &mut filter.ukf.kappa)?;
        kv.set("init_baseline", &mut init.baseline)?;
        kv.set("init_sigma_position", &mut init.sigma_position)?;
        kv.set("init_sigma_theta", &mut init.sigma_theta)?;
        kv.set("init_outlier_chi2", &mut init.outlier_chi2)?;
        kv.reject_unused()?;
        check("gps_sigma", positive(filter.gps_sigma), filter.gps_sigma)?;
        check("sigma_v", filter.noise.sigma_v >= 0.0 && filter.noise.sigma_v.is_finite(), filter.noise.sigma_v)?;
        check(
            "sigma_omega",
            filter.noise.sigma_omega >= 0.0 && filter.noise.sigma_omega.is_finite(),
            filter.noise.sigma_omega,
        )?;
        check(
            "gate_confidence",
            filter.gate_confidence > 0.0 && filter.gate_confidence < 1.0,
            filter.gate_confidence,
        )?;
        check("ukf_alpha", positive(filter.ukf.alpha), filter.ukf.alpha)?;
        check("ukf_beta", filter.ukf.beta.is_finite(), filter.ukf.beta)?;
        check("ukf_kappa", filter.ukf.kappa + 3.0 > 0.0, filter.ukf.kappa)?;
        check("init_baseline", positive(init.baseline), init.baseline)?;
        check("init_sigma_position", positive(init.sigma_position), init.sigma_position)?;
        check("init_sigma_theta", positive(init.sigma_theta), init.sigma_theta)?;
        check("init_outlier_chi2", positive(init.outlier_chi2), init.outlier_chi2)?;
        Ok(Self { filter, init })
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let f = &self.filter;
        [
            ("gps_sigma", f.gps_sigma),
            ("sigma_v", f.noise.sigma_v),
            ("sigma_omega", f.noise.sigma_omega),
            ("gate_confidence", f.gate_confidence),
            ("ukf_alpha", f.ukf.alpha),
            ("ukf_beta", f.ukf.beta),
            ("ukf_kappa", f.ukf.kappa),
            ("init_baseline", self.init.baseline),
            ("init_sigma_position", self.init.sigma_position),
            ("init_sigma_theta", self.init.sigma_theta),
            ("init_outlier_chi2", self.init.outlier_chi2),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSettings {
    pub optimize: OptimizeConfig,
    pub prior_spacing: f64,
    pub gps_sigma: f64,
    pub anchor_sigma: f64,
    pub match_radius: f64,
    pub max_dt: f64,
    pub prealign: bool,
}

impl OptimizeSettings {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut s = Self {
            optimize: OptimizeConfig::default(),
            prior_spacing: DEFAULT_GPS_SPACING,
            gps_sigma: DEFAULT_GPS_SIGMA,
            anchor_sigma: DEFAULT_ANCHOR_SIGMA,
            match_radius: georeg_core::eval::DEFAULT_MATCH_RADIUS,
            max_dt: 0.5,
            prealign: true,
        };
        optimize_keys(kv, &mut s.optimize)?;
        kv.set("prior_spacing", &mut s.prior_spacing)?;
        kv.set("gps_sigma", &mut s.gps_sigma)?;
        kv.set("anchor_sigma", &mut s.anchor_sigma)?;
        kv.set("match_radius", &mut s.match_radius)?;
        kv.set("max_dt", &mut s.max_dt)?;
        kv.set("prealign", &mut s.prealign)?;
        kv.reject_unused()?;
        check("prior_spacing", positive(s.prior_spacing), s.prior_spacing)?;
        check("gps_sigma", positive(s.gps_sigma), s.gps_sigma)?;
        check("anchor_sigma", positive(s.anchor_sigma), s.anchor_sigma)?;
        check("match_radius", positive(s.match_radius), s.match_radius)?;
        check("max_dt", s.max_dt >= 0.0 && s.max_dt.is_finite(), s.max_dt)?;
        Ok(s)
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = [
            ("prior_spacing", self.prior_spacing),
            ("gps_sigma", self.gps_sigma),
            ("anchor_sigma", self.anchor_sigma),
            ("match_radius", self.match_radius),
            ("max_dt", self.max_dt),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        out.insert("prealign".into(), self.prealign.to_string());
        snapshot_optimize(&mut out, &self.optimize);
        out
    }
}

/// Evaluation settings; `region` is given in UTM and converted with the
/// map origin.
pub fn eval_config(kv: &KeyValues, origin: &MapOrigin) -> Result<EvalConfig, ConfigError> {
    let mut c = EvalConfig::default();
    if let Some(n) = kv.list::<usize>("n_values")? {
        c.n_values = n;
    }
    kv.set("max_combinations", &mut c.max_combinations)?;
    kv.set("sample_seed", &mut c.sample_seed)?;
    kv.set("anchor_sigma", &mut c.anchor_sigma)?;
    kv.set("match_radius", &mut c.match_radius)?;
    kv.set("force_sampling", &mut c.force_sampling)?;
    if let Some(poly) = kv.points("region")? {
        check("region", poly.len() >= 3, format!("{} vertices", poly.len()))?;
        c.region_filter = Some(poly.iter().map(|p| origin.utm_to_map(p)).collect());
    }
    optimize_keys(kv, &mut c.optimize)?;
    kv.reject_unused()?;
    check("n_values", !c.n_values.is_empty(), "empty list")?;
    check("max_combinations", c.max_combinations >= 1, c.max_combinations)?;
    check("anchor_sigma", positive(c.anchor_sigma), c.anchor_sigma)?;
    check("match_radius", positive(c.match_radius), c.match_radius)?;
    Ok(c)
}

pub fn snapshot_eval(c: &EvalConfig, origin: &MapOrigin) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let n: Vec<String> = c.n_values.iter().map(usize::to_string).collect();
    out.insert("n_values".into(), n.join(","));
    out.insert("max_combinations".into(), c.max_combinations.to_string());
    out.insert("sample_seed".into(), c.sample_seed.to_string());
    out.insert("anchor_sigma".into(), c.anchor_sigma.to_string());
    out.insert("match_radius".into(), c.match_radius.to_string());
    out.insert("force_sampling".into(), c.force_sampling.to_string());
    if let Some(poly) = &c.region_filter {
        let pts: Vec<String> = poly
            .iter()
            .map(|p| {
                let q: Point2 = origin.map_to_utm(p);
                format!("{} {}", q.x, q.y)
            })
            .collect();
        out.insert("region".into(), pts.join(", "));
    }
    snapshot_optimize(&mut out, &c.optimize);
    out
}
