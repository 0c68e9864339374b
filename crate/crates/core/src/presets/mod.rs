//! Compiled-in model catalogue.

pub mod counterexample;
pub mod cubic;
pub mod fhn;
pub mod linear;

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::DelayMeasure;
use crate::layout::SpatialLayout;
use crate::model::Model;

pub use counterexample::SquareDrift;
pub use cubic::{CubicModel, CubicParams};
pub use fhn::{FhnModel, FhnParams};
pub use linear::{LinearModel, LinearParams};

#[derive(Debug, Clone)]
pub struct PresetInfo {
    pub id: &'static str,
    pub summary: &'static str,
    /// Parameter keys of `[model]` with their defaults.
    pub defaults: toml::Table,
}

fn table_of<T: Serialize>(value: &T) -> toml::Table {
    toml::Table::try_from(value).expect("parameter structs serialise to tables")
}

pub fn catalogue() -> Vec<PresetInfo> {
    vec![
        PresetInfo {
            id: "fhn",
            summary: "FitzHugh-Nagumo network, electrical synapses, jump conductances (d = 2)",
            defaults: table_of(&FhnParams::default()),
        },
        PresetInfo {
            id: "linear",
            summary: "scalar linear jump-diffusion with delay, closed-form moments",
            defaults: table_of(&LinearParams::default()),
        },
        PresetInfo {
            id: "cubic",
            summary: "scalar cubic drift -x^3/3 + x with additive noise",
            defaults: table_of(&CubicParams::default()),
        },
        PresetInfo {
            id: "counterexample",
            summary: "dX = X^2 dt declared with L = K = 0 (fails the hypothesis audit)",
            defaults: toml::Table::new(),
        },
    ]
}

pub fn parse_params<T: DeserializeOwned>(params: &toml::Table) -> Result<T> {
    params
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("model", e.message().to_string()))
}

/// Builds preset `id` from the `[model]` parameters (without the `id` key).
pub fn build(
    id: &str,
    params: &toml::Table,
    nu_total: f64,
    lambda: &DelayMeasure,
    layout: &SpatialLayout,
) -> Result<Arc<dyn Model>> {
    Ok(match id {
        "fhn" => Arc::new(FhnModel::new(parse_params(params)?, nu_total, lambda, layout)?),
        "linear" => Arc::new(LinearModel::new(parse_params(params)?, nu_total, lambda)?),
        "cubic" => Arc::new(CubicModel::new(parse_params(params)?)?),
        "counterexample" => {
            if let Some(k) = params.keys().next() {
                return Err(Error::config(format!("model.{k}"), "the counterexample takes no parameters"));
            }
            Arc::new(SquareDrift)
        }
        other => {
            let known: Vec<_> = catalogue().iter().map(|p| p.id).collect();
            return Err(Error::config(
                "model.id",
                format!("unknown model `{other}`; known: {}", known.join(", ")),
            ));
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    #[test]
    fn unknown_ids_and_keys_are_rejected() {
        let g = TimeGrid::new(1.0, 4, 1.0).unwrap();
        let lam = DelayMeasure::point(&g, -1.0).unwrap();
        let layout = SpatialLayout::lattice(1, 2, 1).unwrap();
        let err = build("hodgkin", &toml::Table::new(), 0.0, &lam, &layout).err().unwrap();
        assert!(err.to_string().contains("model.id"));
        let mut t = toml::Table::new();
        t.insert("bogus".into(), toml::Value::Float(1.0));
        let err = build("linear", &t, 0.0, &lam, &layout).err().unwrap();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn catalogue_defaults_build() {
        let g = TimeGrid::new(0.2, 10, 1.0).unwrap();
        let lam = DelayMeasure::point(&g, -0.2).unwrap();
        let layout = SpatialLayout::lattice(1, 2, 1).unwrap();
        for p in catalogue() {
            let m = build(p.id, &p.defaults, 1.0, &lam, &layout).unwrap();
            assert_eq!(m.id(), p.id);
        }
    }
}
