use super::gauge::GaugeFunction;
use crate::error::{Error, Result};

/// Shape of a lattice region, in coordinates relative to the anchor.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// All of `Z^d`.
    Whole,
    /// `[-m, m]^d`.
    Box(i32),
    /// `{x >= 0, |z| <= h(x)}` in `Z^3`.
    Wedge(GaugeFunction),
    /// Wedge points that also satisfy `|y| <= x`.
    Subwedge(GaugeFunction),
    /// `{x >= 0}`.
    Halfspace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub dim: usize,
    pub shape: Shape,
    pub anchor: Vec<i32>,
}

impl RegionSpec {
    pub fn new(dim: usize, shape: Shape, anchor: Vec<i32>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::arg(format!("lattice dimension must be >= 2, got {dim}")));
        }
        if anchor.len() != dim {
            return Err(Error::arg(format!(
                "anchor has {} coordinates, expected {dim}",
                anchor.len()
            )));
        }
        match &shape {
            Shape::Wedge(_) | Shape::Subwedge(_) if dim != 3 => {
                return Err(Error::arg("wedges live in Z^3"));
            }
            Shape::Box(m) if *m < 0 => return Err(Error::arg("box half-width must be >= 0")),
            _ => {}
        }
        Ok(Self { dim, shape, anchor })
    }

    pub fn whole(dim: usize) -> Result<Self> {
        Self::new(dim, Shape::Whole, vec![0; dim])
    }

    pub fn lattice_box(dim: usize, m: i32) -> Result<Self> {
        Self::new(dim, Shape::Box(m), vec![0; dim])
    }

    pub fn wedge(h: GaugeFunction) -> Self {
        Self { dim: 3, shape: Shape::Wedge(h), anchor: vec![0; 3] }
    }

    pub fn subwedge(h: GaugeFunction) -> Self {
        Self { dim: 3, shape: Shape::Subwedge(h), anchor: vec![0; 3] }
    }

    fn gauge_at(h: &GaugeFunction, x: i32) -> f64 {
        // callers check the table covers the truncation box
        h.get(x as usize).unwrap_or(f64::NAN)
    }

    /// Membership of an absolute lattice point.
    pub fn contains(&self, p: &[i32]) -> bool {
        debug_assert_eq!(p.len(), self.dim);
        let rel = |a: usize| p[a] - self.anchor[a];
        match &self.shape {
            Shape::Whole => true,
            Shape::Box(m) => (0..self.dim).all(|a| rel(a).abs() <= *m),
            Shape::Halfspace => rel(0) >= 0,
            Shape::Wedge(h) => {
                let x = rel(0);
                x >= 0 && f64::from(rel(2).abs()) <= Self::gauge_at(h, x)
            }
            Shape::Subwedge(h) => {
                let x = rel(0);
                x >= 0 && rel(1).abs() <= x && f64::from(rel(2).abs()) <= Self::gauge_at(h, x)
            }
        }
    }

    /// Largest relative `x` at which membership is defined, if bounded.
    pub(crate) fn x_table_limit(&self) -> Option<i64> {
        match &self.shape {
            Shape::Wedge(h) | Shape::Subwedge(h) => Some(h.j_max() as i64),
            _ => None,
        }
    }

    pub fn shape_name(&self) -> &'static str {
        match self.shape {
            Shape::Whole => "lattice",
            Shape::Box(_) => "box",
            Shape::Wedge(_) => "wedge",
            Shape::Subwedge(_) => "subwedge",
            Shape::Halfspace => "halfspace",
        }
    }
}
