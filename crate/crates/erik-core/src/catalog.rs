//! The seven test chains used throughout the evaluation.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Result};
use crate::geom::Vec3;
use crate::skeleton::{LinkSpec, Skeleton};

pub const CATALOG_IDS: [char; 7] = ['A', 'B', 'C', 'D', 'E', 'F', 'G'];

fn axis(c: char) -> Vec3 {
    match c {
        'X' => Vec3::X,
        'Y' => Vec3::Y,
        _ => Vec3::Z,
    }
}

/// Axis letters and the symmetric limit of a catalog chain.
pub fn catalog_layout(id: char) -> Option<(&'static str, f64)> {
    Some(match id.to_ascii_uppercase() {
        'A' => ("YXY", FRAC_PI_2),
        'B' => ("YXZY", PI),
        'C' => ("YXXZY", FRAC_PI_2),
        'D' => ("YXZXY", PI),
        'E' => ("YXZXY", FRAC_PI_2),
        'F' => ("YXXZXY", FRAC_PI_2),
        'G' => ("YXZXYXZY", FRAC_PI_2),
        _ => return None,
    })
}

/// Segment lengths. Skeleton C follows its DH table, where the wrist and
/// the final twist share an origin; the twist therefore sits at the tip
/// with an empty segment. The others use unit segments.
fn lengths(id: char, n: usize) -> Vec<f64> {
    if id == 'C' {
        vec![10.0, 30.0, 30.0, 40.0, 0.0]
    } else {
        vec![1.0; n]
    }
}

pub fn catalog_specs(id: char) -> Result<Vec<LinkSpec>> {
    let id = id.to_ascii_uppercase();
    let (axes, lim) = catalog_layout(id).ok_or_else(|| invalid(format!("unknown catalog skeleton {id}")))?;
    let lens = lengths(id, axes.len());
    Ok(axes
        .chars()
        .zip(lens)
        .map(|(c, l)| LinkSpec {
            segment: Vec3::Y * l,
            rotation_axis: axis(c),
            min_theta: -lim,
            max_theta: lim,
        })
        .collect())
}

pub fn catalog(id: char) -> Result<Skeleton> {
    let specs = catalog_specs(id)?;
    Skeleton::new(id.to_ascii_uppercase().to_string(), &specs)
}
