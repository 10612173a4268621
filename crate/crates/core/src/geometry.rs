//! Canvas geometry: points, rectangles and the fixed layout constants.

use serde::{Deserialize, Serialize};

/// A point or displacement on the 2D canvas, in canvas units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Vec2) -> Vec2 {
        Vec2::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Axis-aligned rectangle. Well-formed when `min <= max` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub const fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn from_coords(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(Vec2::new(x0, y0), Vec2::new(x1, y1))
    }

    pub fn centered(center: Vec2, width: f64, height: f64) -> Self {
        let half = Vec2::new(width / 2.0, height / 2.0);
        Self::new(center - half, center + half)
    }

    /// Finite and `min <= max` on both axes.
    pub fn is_well_formed(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.min.x <= self.max.x
            && self.min.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        self.min.midpoint(self.max)
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains_point(other.min) && self.contains_point(other.max)
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::from_coords(
            self.min.x.min(other.min.x),
            self.min.y.min(other.min.y),
            self.max.x.max(other.max.x),
            self.max.y.max(other.max.y),
        )
    }

    pub fn expand(&self, margin: f64) -> Rect {
        Rect::from_coords(
            self.min.x - margin,
            self.min.y - margin,
            self.max.x + margin,
            self.max.y + margin,
        )
    }

    pub fn translate(&self, delta: Vec2) -> Rect {
        Rect::new(self.min + delta, self.max + delta)
    }
}

/// Fixed layout constants shared by every replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub note_width: f64,
    pub note_height: f64,
    /// Distance from a panel edge within which a dropped note snaps onto it.
    pub snap_distance: f64,
    /// Margin added around attached notes when a panel fits itself.
    pub panel_margin: f64,
    /// Vertical spacing between stacked labels on a link.
    pub label_spacing: f64,
}

pub const LAYOUT: Layout = Layout {
    note_width: 120.0,
    note_height: 120.0,
    snap_distance: 40.0,
    panel_margin: 20.0,
    label_spacing: 24.0,
};

impl Layout {
    /// Rectangle of a note centred at `position`.
    pub fn note_rect(&self, position: Vec2) -> Rect {
        Rect::centered(position, self.note_width, self.note_height)
    }

    /// Pin anchor of a note: top-centre of its rectangle.
    pub fn pin_anchor(&self, position: Vec2) -> Vec2 {
        Vec2::new(position.x, position.y - self.note_height / 2.0)
    }
}

/// Bounding box of `rects` grown by `margin` on every side. `None` for an
/// empty input.
pub fn panel_fit(rects: &[Rect], margin: f64) -> Option<Rect> {
    let (first, rest) = rects.split_first()?;
    Some(rest.iter().fold(*first, |acc, r| acc.union(r)).expand(margin))
}

/// Positions for labels stacked on a link: centred on the segment midpoint,
/// `spacing` apart vertically, first label on top (smallest y).
pub fn label_layout(from: Vec2, to: Vec2, count: usize, spacing: f64) -> Vec<Vec2> {
    let mid = from.midpoint(to);
    let centre = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|i| Vec2::new(mid.x, mid.y + (i as f64 - centre) * spacing))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_single_rect() {
        let r = Rect::from_coords(0.0, 0.0, 10.0, 10.0);
        assert_eq!(panel_fit(&[r], 5.0), Some(Rect::from_coords(-5.0, -5.0, 15.0, 15.0)));
    }

    #[test]
    fn fit_two_rects() {
        let a = Rect::from_coords(0.0, 0.0, 10.0, 10.0);
        let b = Rect::from_coords(20.0, 0.0, 30.0, 10.0);
        assert_eq!(panel_fit(&[a, b], 5.0), Some(Rect::from_coords(-5.0, -5.0, 35.0, 15.0)));
    }

    #[test]
    fn fit_empty_is_none() {
        assert_eq!(panel_fit(&[], 5.0), None);
    }

    #[test]
    fn labels_stack_around_midpoint() {
        let one = label_layout(Vec2::ZERO, Vec2::new(10.0, 20.0), 1, 12.0);
        assert_eq!(one, vec![Vec2::new(5.0, 10.0)]);

        let three = label_layout(Vec2::ZERO, Vec2::new(10.0, 20.0), 3, 12.0);
        let offsets: Vec<f64> = three.iter().map(|p| p.y - 10.0).collect();
        assert_eq!(offsets, vec![-12.0, 0.0, 12.0]);
        assert!(three.iter().all(|p| p.x == 5.0));
    }

    #[test]
    fn pin_is_top_centre() {
        assert_eq!(LAYOUT.pin_anchor(Vec2::new(100.0, 100.0)), Vec2::new(100.0, 40.0));
        assert_eq!(
            LAYOUT.note_rect(Vec2::new(100.0, 100.0)),
            Rect::from_coords(40.0, 40.0, 160.0, 160.0)
        );
    }

    #[test]
    fn rect_well_formed() {
        assert!(Rect::from_coords(0.0, 0.0, 0.0, 0.0).is_well_formed());
        assert!(!Rect::from_coords(1.0, 0.0, 0.0, 0.0).is_well_formed());
        assert!(!Rect::from_coords(0.0, 0.0, f64::NAN, 1.0).is_well_formed());
    }
}
