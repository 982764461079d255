//! Leaf-on and leaf-off composites.
//!
//! Leaf-on: irradiation of the DSM with every tree pixel set to the all-day
//! shade value `v`. Leaf-off: the deciduous run is lifted toward its maximum
//! by the light penetration factor, pixels beneath crowns are substituted
//! (evergreen: all-day shade; deciduous: partially transmitted), and the
//! building, evergreen and deciduous runs are merged by per-pixel minimum.

use serde::{Deserialize, Serialize};

use crate::classify::SceneMasks;
use crate::error::{Error, Result};
use crate::raster::{min_max, min_merge, substitute, BinaryMask, Raster, Source};

/// Pixels below this fraction of the deciduous maximum receive the
/// penetration adjustment.
pub const PENETRATION_CUTOFF: f64 = 0.995;

fn check_fraction(f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Range {
            what: "light penetration factor".into(),
            value: f,
            min: 0.0,
            max: 1.0,
        });
    }
    Ok(())
}

/// Sets every tree pixel to `v`. Without an override `v` is the raster
/// minimum, which is the value of a pixel shaded all day. Returns the
/// composite and the `v` used.
pub fn leaf_on_composite(leaf_on_irr: &Raster, tree: &BinaryMask, v_override: Option<f64>) -> Result<(Raster, f64)> {
    leaf_on_irr.spec().ensure_same(tree.spec(), "leaf_on_composite")?;
    let (lo, hi) = min_max(leaf_on_irr)?;
    let v = match v_override {
        Some(v) if !(lo..=hi).contains(&v) => {
            return Err(Error::Range {
                what: "all-day shade value override".into(),
                value: v,
                min: lo,
                max: hi,
            })
        }
        Some(v) => v,
        None => lo,
    };
    Ok((substitute(leaf_on_irr, tree, Source::Constant(v))?, v))
}

/// `current + f * (max - current)` for every pixel below 99.5% of the
/// maximum.
pub fn apply_penetration(d: &Raster, f: f64) -> Result<Raster> {
    check_fraction(f)?;
    let (_, max) = min_max(d)?;
    let cutoff = PENETRATION_CUTOFF * max;
    Ok(d.map_valid(|v| if v < cutoff { v + f * (max - v) } else { v }))
}

#[derive(Debug, Clone)]
pub struct BeneathTrees {
    pub e_sub: Raster,
    pub d_sub: Raster,
    pub evergreen_value: f64,
    pub deciduous_value: f64,
}

/// Substitutes pixels beneath crowns. `d_extrema` are the minimum and
/// maximum of the unadjusted deciduous run. The evergreen value defaults to
/// the minimum of `e`.
pub fn beneath_trees_leaf_off(
    e: &Raster,
    d_adj: &Raster,
    masks: &SceneMasks,
    f: f64,
    d_extrema: (f64, f64),
    evergreen_override: Option<f64>,
) -> Result<BeneathTrees> {
    check_fraction(f)?;
    e.spec().ensure_same(d_adj.spec(), "beneath_trees deciduous raster")?;
    e.spec().ensure_same(masks.spec(), "beneath_trees masks")?;
    let evergreen_value = match evergreen_override {
        Some(v) => v,
        None => min_max(e)?.0,
    };
    let (min, max) = d_extrema;
    let deciduous_value = min + f * (max - min);
    Ok(BeneathTrees {
        e_sub: substitute(e, &masks.evergreen, Source::Constant(evergreen_value))?,
        d_sub: substitute(d_adj, &masks.deciduous, Source::Constant(deciduous_value))?,
        evergreen_value,
        deciduous_value,
    })
}

pub fn leaf_off_composite(b: &Raster, e_sub: &Raster, d_sub: &Raster) -> Result<Raster> {
    min_merge(&[b, e_sub, d_sub])
}

/// Irradiation runs and masks feeding the composites.
#[derive(Debug, Clone)]
pub struct SeasonInputs {
    /// DSM run on the leaf-on date.
    pub leaf_on_irr: Raster,
    /// building_DEM run on the leaf-off date.
    pub b: Raster,
    /// evergreen_DEM run on the leaf-off date.
    pub e: Raster,
    /// deciduous_DEM run on the leaf-off date.
    pub d: Raster,
    pub masks: SceneMasks,
    pub f: f64,
    pub v_override: Option<f64>,
    pub evergreen_override: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SeasonOutputs {
    pub leaf_on: Raster,
    pub leaf_off: Raster,
    pub d_adjusted: Raster,
    pub e_sub: Raster,
    pub d_sub: Raster,
}

/// Constants derived while compositing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeConstants {
    pub v: f64,
    pub f: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub evergreen_value: f64,
    pub deciduous_value: f64,
}

pub fn compose(inputs: &SeasonInputs) -> Result<(SeasonOutputs, CompositeConstants)> {
    inputs.masks.check()?;
    let spec = inputs.masks.spec();
    for (name, r) in [
        ("leaf-on irradiation", &inputs.leaf_on_irr),
        ("b", &inputs.b),
        ("e", &inputs.e),
        ("d", &inputs.d),
    ] {
        spec.ensure_same(r.spec(), name)?;
    }
    check_fraction(inputs.f)?;
    let (leaf_on, v) = leaf_on_composite(&inputs.leaf_on_irr, &inputs.masks.tree, inputs.v_override)?;
    let d_extrema = min_max(&inputs.d)?;
    let d_adjusted = apply_penetration(&inputs.d, inputs.f)?;
    let beneath = beneath_trees_leaf_off(
        &inputs.e,
        &d_adjusted,
        &inputs.masks,
        inputs.f,
        d_extrema,
        inputs.evergreen_override,
    )?;
    let leaf_off = leaf_off_composite(&inputs.b, &beneath.e_sub, &beneath.d_sub)?;
    Ok((
        SeasonOutputs {
            leaf_on,
            leaf_off,
            d_adjusted,
            e_sub: beneath.e_sub,
            d_sub: beneath.d_sub,
        },
        CompositeConstants {
            v,
            f: inputs.f,
            d_min: d_extrema.0,
            d_max: d_extrema.1,
            evergreen_value: beneath.evergreen_value,
            deciduous_value: beneath.deciduous_value,
        },
    ))
}
