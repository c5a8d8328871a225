//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Every field of [`TrackerConfig`] has a key;
//! a few keys have short aliases (`e`, `T`, `omega`, `N_t`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::MapPooling;
use crate::tracker::TrackerConfig;

fn value<T: FromStr>(raw: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| format!("invalid value {raw:?}: {e}"))
}

fn boolean(raw: &str) -> std::result::Result<bool, String> {
    match raw {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("invalid boolean {raw:?}")),
    }
}

/// `none`, `avg:<e>` or `max:<e>`.
pub fn parse_pooling(raw: &str) -> std::result::Result<MapPooling, String> {
    if raw == "none" {
        return Ok(MapPooling::None);
    }
    let (kind, size) = raw
        .split_once(':')
        .ok_or_else(|| format!("invalid pooling {raw:?}; expected none, avg:<e> or max:<e>"))?;
    let e: usize = value(size)?;
    if e == 0 {
        return Err("pooling kernel must be positive".into());
    }
    match kind {
        "avg" => Ok(MapPooling::Average(e)),
        "max" => Ok(MapPooling::Max(e)),
        _ => Err(format!("invalid pooling kind {kind:?}")),
    }
}

fn format_pooling(p: MapPooling) -> String {
    match p {
        MapPooling::None => "none".into(),
        MapPooling::Average(e) => format!("avg:{e}"),
        MapPooling::Max(e) => format!("max:{e}"),
    }
}

/// Apply one setting.
pub fn set(config: &mut TrackerConfig, key: &str, raw: &str) -> std::result::Result<(), String> {
    let f = &mut config.features;
    let s = &mut config.solver;
    match key {
        "cell_size" => f.cell_size = value(raw)?,
        "use_hog" => f.use_hog = boolean(raw)?,
        "use_colornames" => f.use_colornames = boolean(raw)?,
        "hog_dims" => f.hog_dims = value(raw)?,
        "cn_dims" => f.cn_dims = value(raw)?,
        "map_pooling" => f.pooling = parse_pooling(raw)?,
        "feature_energy" => f.energy = value(raw)?,
        "colornames_path" => {
            f.colornames_path = if raw.is_empty() {
                None
            } else {
                Some(PathBuf::from(raw))
            }
        }
        "lambda" => s.lambda = value(raw)?,
        "gamma1" => s.gamma1 = value(raw)?,
        "gamma_ratio" => s.gamma_ratio = value(raw)?,
        "gamma_max" => s.gamma_max = value(raw)?,
        "alpha" => s.alpha = value(raw)?,
        "admm_iters" => {
            let n = value(raw)?;
            s.admm_iters_first = n;
            s.admm_iters_update = n;
        }
        "admm_iters_first" => s.admm_iters_first = value(raw)?,
        "admm_iters_update" => s.admm_iters_update = value(raw)?,
        "cg_budget_first" => s.cg_budget_first = value(raw)?,
        "cg_budget_update" => s.cg_budget_update = value(raw)?,
        "cg_tol" => s.cg_tol = value(raw)?,
        "reset_duals" => s.reset_duals = boolean(raw)?,
        "carry_direction" => s.carry_direction = boolean(raw)?,
        "divergence_factor" => s.divergence_factor = value(raw)?,
        "e" | "kernel" => config.kernel = value(raw)?,
        "g_min" => config.regularizer.g_min = value(raw)?,
        "g_slope" => config.regularizer.g_slope = value(raw)?,
        "sigma_factor" => config.sigma_factor = value(raw)?,
        "search_area_scale" => config.search_area_scale = value(raw)?,
        "min_patch_side" => config.min_patch_side = value(raw)?,
        "max_patch_side" => config.max_patch_side = value(raw)?,
        "num_scales" => config.num_scales = value(raw)?,
        "scale_step" => config.scale_step = value(raw)?,
        "min_scale" => config.min_scale = value(raw)?,
        "max_scale" => config.max_scale = value(raw)?,
        "T" | "memory_capacity" => config.memory_capacity = value(raw)?,
        "omega" | "learning_rate" => config.learning_rate = value(raw)?,
        "N_t" | "update_interval" => config.update_interval = value(raw)?,
        "upsample" => config.upsample = value(raw)?,
        "newton_iters" => config.newton_iters = value(raw)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

/// Parse settings on top of the defaults. `path` only labels errors.
pub fn parse_config(text: &str, path: &Path) -> Result<TrackerConfig> {
    let mut config = TrackerConfig::default();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, raw) = line
            .split_once('=')
            .ok_or_else(|| err("expected key = value".into()))?;
        set(&mut config, key.trim(), raw.trim()).map_err(err)?;
    }
    config
        .validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<TrackerConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Every key with its current value, in a form [`parse_config`] reads back.
pub fn format_config(c: &TrackerConfig) -> String {
    let f = &c.features;
    let s = &c.solver;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("cell_size", f.cell_size.to_string());
    kv("use_hog", f.use_hog.to_string());
    kv("use_colornames", f.use_colornames.to_string());
    kv("hog_dims", f.hog_dims.to_string());
    kv("cn_dims", f.cn_dims.to_string());
    kv("map_pooling", format_pooling(f.pooling));
    kv("feature_energy", f.energy.to_string());
    kv(
        "colornames_path",
        f.colornames_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    );
    kv("lambda", s.lambda.to_string());
    kv("gamma1", s.gamma1.to_string());
    kv("gamma_ratio", s.gamma_ratio.to_string());
    kv("gamma_max", s.gamma_max.to_string());
    kv("alpha", s.alpha.to_string());
    kv("admm_iters_first", s.admm_iters_first.to_string());
    kv("admm_iters_update", s.admm_iters_update.to_string());
    kv("cg_budget_first", s.cg_budget_first.to_string());
    kv("cg_budget_update", s.cg_budget_update.to_string());
    kv("cg_tol", s.cg_tol.to_string());
    kv("reset_duals", s.reset_duals.to_string());
    kv("carry_direction", s.carry_direction.to_string());
    kv("divergence_factor", s.divergence_factor.to_string());
    kv("kernel", c.kernel.to_string());
    kv("g_min", c.regularizer.g_min.to_string());
    kv("g_slope", c.regularizer.g_slope.to_string());
    kv("sigma_factor", c.sigma_factor.to_string());
    kv("search_area_scale", c.search_area_scale.to_string());
    kv("min_patch_side", c.min_patch_side.to_string());
    kv("max_patch_side", c.max_patch_side.to_string());
    kv("num_scales", c.num_scales.to_string());
    kv("scale_step", c.scale_step.to_string());
    kv("min_scale", c.min_scale.to_string());
    kv("max_scale", c.max_scale.to_string());
    kv("memory_capacity", c.memory_capacity.to_string());
    kv("learning_rate", c.learning_rate.to_string());
    kv("update_interval", c.update_interval.to_string());
    kv("upsample", c.upsample.to_string());
    kv("newton_iters", c.newton_iters.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TrackerConfig> {
        parse_config(text, Path::new("test.cfg"))
    }

    #[test]
    fn defaults_roundtrip() {
        let c = TrackerConfig::default();
        assert_eq!(parse(&format_config(&c)).unwrap(), c);
        assert_eq!(parse("").unwrap(), c);
    }

    #[test]
    fn aliases_and_comments() {
        let c = parse("# comment\ne = 1\nT = 20 # trailing\nomega=0.05\nN_t = 3\nadmm_iters = 4\nmap_pooling = max:2\n").unwrap();
        assert_eq!(c.kernel, 1);
        assert_eq!(c.memory_capacity, 20);
        assert_eq!(c.learning_rate, 0.05);
        assert_eq!(c.update_interval, 3);
        assert_eq!(
            (c.solver.admm_iters_first, c.solver.admm_iters_update),
            (4, 4)
        );
        assert_eq!(c.features.pooling, MapPooling::Max(2));
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse("lambda = 0.1\nbogus = 3\n").unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("lambda 0.1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse("kernel = two"), Err(Error::Parse { .. })));
        assert!(matches!(parse("kernel = 0"), Err(Error::Config(_))));
        assert!(parse("map_pooling = mean:2").is_err());
    }
}
