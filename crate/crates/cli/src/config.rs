//! TOML run configuration and its mapping onto library types.
//!
//! Schema (all sections optional unless a command needs them):
//!
//! ```toml
//! [problem]
//! q = 3                  # factor count
//! n = 26                 # run count (optimize)
//!
//! [region]
//! kind = "cube"          # "cube" | "sphere"
//! rho = 2.2360679        # sphere radius, required for spheres
//!
//! [criterion]
//! kappa_d = 0.0          # D_S weight          kappa_dp = 0.0   (DP)_S
//! kappa_ap = 0.0         # (AP)_S weight       kappa_a = 0.0    A_S
//! kappa_df = 0.0         # (n - d) weight
//! kappa_i = 0.0          # I                   kappa_ip = 0.0   (IP)
//! kappa_id = 1.0         # I_D                 kappa_idp = 0.0  (I_DP)
//! alpha = 0.05           # sets all four levels; alpha_dp etc. override
//! w_linear = 1.0
//! w_quadratic = 0.25
//! w_interaction = 1.0
//!
//! [search]
//! starts = 100
//! max_passes = 50
//! seed = 0
//!
//! [graph]
//! variant = "fds"        # "vdg" | "dvdg" | "fds" | "dfds"
//! scale = "variance"     # "variance" | "se"
//! interval_alpha = 0.05  # omit for point variant
//! axis = "distance"      # "distance" | "volume"
//! n_radii = 101
//! n_samples = 100000
//! shell_samples = 10000
//! seed = 0
//! ```

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use rsdesign::criteria::{alpha, kappa, CriterionConfig};
use rsdesign::graphs::{GraphAxis, GraphConfig, GraphScale, GraphVariant};
use rsdesign::model::ModelSpec;
use rsdesign::Region;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<ProblemSection>,
    pub region: Option<RegionSection>,
    #[serde(default)]
    pub criterion: CriterionSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub graph: GraphSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub q: usize,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub kind: String,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriterionSection {
    pub kappa_d: f64,
    pub kappa_dp: f64,
    pub kappa_ap: f64,
    pub kappa_a: f64,
    pub kappa_df: f64,
    pub kappa_i: f64,
    pub kappa_ip: f64,
    pub kappa_id: f64,
    pub kappa_idp: f64,
    pub alpha: f64,
    pub alpha_dp: Option<f64>,
    pub alpha_ap: Option<f64>,
    pub alpha_ip: Option<f64>,
    pub alpha_idp: Option<f64>,
    pub w_linear: f64,
    pub w_quadratic: f64,
    pub w_interaction: f64,
}

impl Default for CriterionSection {
    fn default() -> Self {
        CriterionSection {
            kappa_d: 0.0,
            kappa_dp: 0.0,
            kappa_ap: 0.0,
            kappa_a: 0.0,
            kappa_df: 0.0,
            kappa_i: 0.0,
            kappa_ip: 0.0,
            kappa_id: 0.0,
            kappa_idp: 0.0,
            alpha: 0.05,
            alpha_dp: None,
            alpha_ap: None,
            alpha_ip: None,
            alpha_idp: None,
            w_linear: 1.0,
            w_quadratic: 0.25,
            w_interaction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub starts: usize,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            starts: 100,
            max_passes: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub variant: Option<String>,
    pub scale: String,
    pub interval_alpha: Option<f64>,
    pub axis: String,
    pub n_radii: usize,
    pub n_samples: usize,
    pub shell_samples: usize,
    pub seed: u64,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            variant: None,
            scale: "variance".into(),
            interval_alpha: None,
            axis: "distance".into(),
            n_radii: 101,
            n_samples: 100_000,
            shell_samples: 10_000,
            seed: 0,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn q(&self) -> Result<usize> {
        let q = self
            .problem
            .as_ref()
            .ok_or_else(|| anyhow!("config needs a [problem] section with q"))?
            .q;
        if q == 0 {
            bail!("factor count q must be at least 1");
        }
        Ok(q)
    }

    pub fn n(&self) -> Result<usize> {
        self.problem
            .as_ref()
            .and_then(|p| p.n)
            .ok_or_else(|| anyhow!("config needs [problem] n for this command"))
    }

    pub fn region(&self) -> Result<Region> {
        let q = self.q()?;
        let section = self
            .region
            .as_ref()
            .ok_or_else(|| anyhow!("config needs a [region] section"))?;
        match section.kind.as_str() {
            "cube" => Ok(Region::cube(q)),
            "sphere" => {
                let rho = section
                    .rho
                    .ok_or_else(|| anyhow!("spherical regions need an explicit rho"))?;
                Ok(Region::sphere(q, rho)?)
            }
            other => bail!("unknown region kind `{other}` (expected cube or sphere)"),
        }
    }

    /// Map the `[criterion]` section onto the library configuration;
    /// `alpha_override` (from `--alpha`) wins over every file value.
    pub fn criterion(
        &self,
        model: &ModelSpec,
        alpha_override: Option<f64>,
    ) -> Result<CriterionConfig> {
        let c = &self.criterion;
        let mut kappas = [0.0f64; 9];
        kappas[kappa::DS] = c.kappa_d;
        kappas[kappa::DPS] = c.kappa_dp;
        kappas[kappa::APS] = c.kappa_ap;
        kappas[kappa::AS] = c.kappa_a;
        kappas[kappa::DF] = c.kappa_df;
        kappas[kappa::I] = c.kappa_i;
        kappas[kappa::IP] = c.kappa_ip;
        kappas[kappa::ID] = c.kappa_id;
        kappas[kappa::IDP] = c.kappa_idp;
        let mut alphas = [c.alpha; 4];
        alphas[alpha::DP] = c.alpha_dp.unwrap_or(c.alpha);
        alphas[alpha::AP] = c.alpha_ap.unwrap_or(c.alpha);
        alphas[alpha::IP] = c.alpha_ip.unwrap_or(c.alpha);
        alphas[alpha::IDP] = c.alpha_idp.unwrap_or(c.alpha);
        if let Some(a) = alpha_override {
            alphas = [a; 4];
        }
        let w = model
            .terms()
            .iter()
            .map(|t| match t {
                rsdesign::Term::Intercept => 0.0,
                rsdesign::Term::Linear(_) => c.w_linear,
                rsdesign::Term::Quadratic(_) => c.w_quadratic,
                rsdesign::Term::Interaction(_, _) => c.w_interaction,
            })
            .collect();
        let cfg = CriterionConfig::new(kappas, alphas, w);
        cfg.validate(model.p())?;
        Ok(cfg)
    }

    pub fn graph(&self, variant_flag: Option<&str>) -> Result<GraphConfig> {
        let g = &self.graph;
        let variant = match variant_flag.or(g.variant.as_deref()) {
            Some("vdg") => GraphVariant::Vdg,
            Some("dvdg") => GraphVariant::Dvdg,
            Some("fds") => GraphVariant::Fds,
            Some("dfds") => GraphVariant::Dfds,
            Some(other) => bail!("unknown graph variant `{other}`"),
            None => bail!("graph variant missing (config [graph] variant or --variant)"),
        };
        let scale = match g.scale.as_str() {
            "variance" => GraphScale::Variance,
            "se" => GraphScale::StandardError,
            other => bail!("unknown graph scale `{other}` (expected variance or se)"),
        };
        let axis = match g.axis.as_str() {
            "distance" => GraphAxis::Distance,
            "volume" => GraphAxis::VolumeFraction,
            other => bail!("unknown graph axis `{other}` (expected distance or volume)"),
        };
        let mut cfg = GraphConfig::new(variant);
        cfg.scale = scale;
        cfg.axis = axis;
        cfg.interval_alpha = g.interval_alpha;
        cfg.n_radii = g.n_radii;
        cfg.n_samples = g.n_samples;
        cfg.shell_samples = g.shell_samples;
        cfg.seed = g.seed;
        Ok(cfg)
    }
}

/// Parse an inclusive `lo..hi` range (or a single value).
pub fn parse_range(text: &str) -> Result<(usize, usize)> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().context("bad range start")?;
        let hi: usize = hi.trim().parse().context("bad range end")?;
        if lo > hi {
            bail!("empty range {text}");
        }
        Ok((lo, hi))
    } else {
        let v: usize = text.trim().parse().context("bad range value")?;
        Ok((v, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
[problem]
q = 3
n = 26

[region]
kind = "cube"

[criterion]
kappa_dp = 0.5
kappa_id = 0.5

[search]
starts = 10
seed = 7
"#;
        let cfg: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.q().unwrap(), 3);
        assert_eq!(cfg.n().unwrap(), 26);
        let model = ModelSpec::full_quadratic(3);
        let crit = cfg.criterion(&model, None).unwrap();
        assert_eq!(crit.kappas[kappa::DPS], 0.5);
        assert_eq!(crit.kappas[kappa::ID], 0.5);
        assert_eq!(cfg.search.starts, 10);
        assert_eq!(cfg.search.seed, 7);
    }

    #[test]
    fn alpha_override_wins() {
        let cfg: FileConfig =
            toml::from_str("[criterion]\nkappa_id = 1.0\nalpha = 0.01\n").unwrap();
        let model = ModelSpec::full_quadratic(2);
        let crit = cfg.criterion(&model, Some(0.1)).unwrap();
        assert_eq!(crit.alphas, [0.1; 4]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_weights() {
        assert!(toml::from_str::<FileConfig>("[criterion]\nkappa_zzz = 1.0\n").is_err());
        let cfg: FileConfig = toml::from_str("[criterion]\nkappa_id = 0.9\n").unwrap();
        let model = ModelSpec::full_quadratic(2);
        assert!(
            cfg.criterion(&model, None).is_err(),
            "weights must sum to 1"
        );
    }

    #[test]
    fn sphere_requires_rho() {
        let cfg: FileConfig =
            toml::from_str("[problem]\nq = 2\n[region]\nkind = \"sphere\"\n").unwrap();
        assert!(cfg.region().is_err());
        let cfg: FileConfig =
            toml::from_str("[problem]\nq = 2\n[region]\nkind = \"sphere\"\nrho = 1.5\n").unwrap();
        assert!(cfg.region().is_ok());
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("16..21").unwrap(), (16, 21));
        assert_eq!(parse_range("30").unwrap(), (30, 30));
        assert!(parse_range("21..16").is_err());
        assert!(parse_range("x..y").is_err());
    }
}
