//! Chromophore geometries: coaxial stacks of rings and helical rods.
//!
//! Sites are stored 0-based. Site `s` of a ring stack sits in ring slot
//! `s / n` at in-ring position `s % n`; the closed-form angle uses the 1-based
//! label `i = s % n + 1`. Helix sites use the global 1-based label `i = s + 1`
//! and are grouped into turns of `n` consecutive sites.
//!
//! Ring slots run `0..N`; the signed ring index used by the diffusion length
//! is `slot - (N - 1) / 2`, so the middle ring of an odd stack is ring 0.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeometryKind {
    #[serde(rename = "rings")]
    RingStack,
    #[serde(rename = "helix")]
    Helix,
}

impl GeometryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeometryKind::RingStack => "rings",
            GeometryKind::Helix => "helix",
        }
    }
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rings" => Ok(GeometryKind::RingStack),
            "helix" => Ok(GeometryKind::Helix),
            other => Err(Error::invalid(
                "kind",
                format!("expected \"rings\" or \"helix\", got {other:?}"),
            )),
        }
    }
}

/// Immutable set of chromophore positions with a site → ring map.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteLattice {
    kind: GeometryKind,
    sites_per_ring: usize,
    rings: usize,
    radius: f64,
    spacing: f64,
    positions: Vec<Vector3<f64>>,
}

fn check_counts(n: usize, rings: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if rings == 0 {
        return Err(Error::invalid("N", "must be at least 1"));
    }
    Ok(())
}

fn check_length(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::invalid(name, format!("must be positive, got {value}")));
    }
    Ok(())
}

fn ring_point(radius: f64, label: usize, n: usize, z: f64) -> Vector3<f64> {
    let angle = 2.0 * PI * label as f64 / n as f64;
    Vector3::new(radius * angle.cos(), radius * angle.sin(), z)
}

impl SiteLattice {
    /// `rings` coaxial rings of `n` sites, radius `radius`, separated by `spacing`.
    pub fn ring_stack(n: usize, rings: usize, radius: f64, spacing: f64) -> Result<Self> {
        check_counts(n, rings)?;
        check_length("R", radius)?;
        check_length("D", spacing)?;
        let center = (rings as f64 - 1.0) / 2.0;
        let positions = (0..rings)
            .flat_map(|slot| {
                let z = (slot as f64 - center) * spacing;
                (1..=n).map(move |label| ring_point(radius, label, n, z))
            })
            .collect();
        Ok(SiteLattice {
            kind: GeometryKind::RingStack,
            sites_per_ring: n,
            rings,
            radius,
            spacing,
            positions,
        })
    }

    /// Helix with `n` sites per turn, `turns` turns and pitch `pitch`.
    pub fn helix(n: usize, turns: usize, radius: f64, pitch: f64) -> Result<Self> {
        check_counts(n, turns)?;
        check_length("R", radius)?;
        check_length("d", pitch)?;
        let positions = (1..=n * turns)
            .map(|label| ring_point(radius, label, n, pitch * label as f64 / n as f64))
            .collect();
        Ok(SiteLattice {
            kind: GeometryKind::Helix,
            sites_per_ring: n,
            rings: turns,
            radius,
            spacing: pitch,
            positions,
        })
    }

    pub fn build(kind: GeometryKind, n: usize, rings: usize, radius: f64, spacing: f64) -> Result<Self> {
        match kind {
            GeometryKind::RingStack => Self::ring_stack(n, rings, radius, spacing),
            GeometryKind::Helix => Self::helix(n, rings, radius, spacing),
        }
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn sites_per_ring(&self) -> usize {
        self.sites_per_ring
    }

    pub fn ring_count(&self) -> usize {
        self.rings
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Ring separation `D` for stacks, pitch `d` for helices.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn position(&self, site: usize) -> Result<Vector3<f64>> {
        self.check_site(site)?;
        Ok(self.positions[site])
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.len() {
            return Err(Error::IndexOutOfRange {
                what: "site",
                index: site as i64,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// Ring slot (`0..N`) holding `site`.
    pub fn ring_slot(&self, site: usize) -> usize {
        site / self.sites_per_ring
    }

    /// Signed ring index of a slot, centered on the middle of the stack.
    pub fn ring_offset(&self, slot: usize) -> f64 {
        slot as f64 - (self.rings as f64 - 1.0) / 2.0
    }

    /// Signed ring index of the ring holding `site`.
    pub fn ring_of(&self, site: usize) -> f64 {
        self.ring_offset(self.ring_slot(site))
    }

    pub fn middle_slot(&self) -> usize {
        (self.rings - 1) / 2
    }

    /// Slot of the signed ring index `ring` (0 is the middle ring).
    pub fn slot_of_ring(&self, ring: i64) -> Result<usize> {
        let slot = self.middle_slot() as i64 + ring;
        if slot < 0 || slot >= self.rings as i64 {
            return Err(Error::IndexOutOfRange {
                what: "ring",
                index: ring,
                len: self.rings,
            });
        }
        Ok(slot as usize)
    }

    /// Sites of ring `slot`, in in-ring order.
    pub fn ring_sites(&self, slot: usize) -> std::ops::Range<usize> {
        slot * self.sites_per_ring..(slot + 1) * self.sites_per_ring
    }

    pub fn pair_distance(&self, a: usize, b: usize) -> Result<f64> {
        self.check_site(a)?;
        self.check_site(b)?;
        Ok((self.positions[a] - self.positions[b]).norm())
    }

    /// Odd `n` and odd `N`, as the closed-form comparisons require.
    pub fn require_odd(&self) -> Result<()> {
        require_odd(self.sites_per_ring, self.rings)
    }
}

pub(crate) fn require_odd(n: usize, rings: usize) -> Result<()> {
    if n % 2 == 0 {
        return Err(Error::invalid("n", format!("must be odd for closed-form comparison, got {n}")));
    }
    if rings % 2 == 0 {
        return Err(Error::invalid("N", format!("must be odd for closed-form comparison, got {rings}")));
    }
    Ok(())
}
