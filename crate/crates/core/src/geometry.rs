//! Spatial processes and exact occlusion predicates.
//!
//! Base stations form a homogeneous PPP on a disc around the user at the
//! origin. Blockages are rectangles with fixed marks whose centers form an
//! independent PPP (a Boolean model); a link is LoS when its closed segment
//! touches no rectangle.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn rotated(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Polar position relative to the user at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPolar {
    pub r: f64,
    /// Azimuth in `[0, 2π)`.
    pub theta: f64,
}

impl PointPolar {
    pub fn new(r: f64, theta: f64) -> Self {
        Self {
            r,
            theta: normalize_angle(theta),
        }
    }

    pub fn to_cartesian(self) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(self.r * c, self.r * s)
    }
}

/// Map an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub center: Point,
    /// Extent along the orientation axis.
    pub length: f64,
    /// Extent perpendicular to the orientation axis.
    pub width: f64,
    pub orientation: f64,
}

impl Rectangle {
    pub fn new(center: Point, length: f64, width: f64, orientation: f64) -> Result<Self> {
        let rect = Self {
            center,
            length,
            width,
            orientation: normalize_angle(orientation),
        };
        rect.check()?;
        Ok(rect)
    }

    fn check(&self) -> Result<()> {
        if !(self.length.is_finite()
            && self.width.is_finite()
            && self.length > 0.0
            && self.width > 0.0)
        {
            return Err(Error::Parameter(format!(
                "rectangle needs positive finite sides, got {} x {}",
                self.length, self.width
            )));
        }
        Ok(())
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

/// How blockage orientations are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Orientation {
    /// Every rectangle shares this orientation.
    Fixed(f64),
    /// Independent uniform orientation per rectangle (simulator-only extension).
    Uniform,
}

/// Marks carried by every blockage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockageMarks {
    pub length: f64,
    pub width: f64,
    pub orientation: Orientation,
}

impl BlockageMarks {
    pub fn fixed(length: f64, width: f64, orientation: f64) -> Self {
        Self {
            length,
            width,
            orientation: Orientation::Fixed(orientation),
        }
    }

    fn validate(&self) -> Result<()> {
        Rectangle {
            center: Point::ORIGIN,
            length: self.length,
            width: self.width,
            orientation: 0.0,
        }
        .check()?;
        if let Orientation::Fixed(phi) = self.orientation {
            if !phi.is_finite() {
                return Err(Error::Parameter(format!(
                    "orientation must be finite, got {phi}"
                )));
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, center: Point, rng: &mut R) -> Rectangle {
        let orientation = match self.orientation {
            Orientation::Fixed(phi) => normalize_angle(phi),
            Orientation::Uniform => rng.random::<f64>() * 2.0 * PI,
        };
        Rectangle {
            center,
            length: self.length,
            width: self.width,
            orientation,
        }
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

/// One sampled network around the user at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    /// Strictly increasing in `r`.
    pub base_stations: Vec<PointPolar>,
    pub blockages: Vec<Rectangle>,
    pub region_radius: f64,
}

fn check_intensity(intensity: f64) -> Result<()> {
    if !(intensity.is_finite() && intensity >= 0.0) {
        return Err(Error::Parameter(format!(
            "intensity must be finite and >= 0, got {intensity}"
        )));
    }
    Ok(())
}

fn check_radius(region_radius: f64) -> Result<()> {
    if !(region_radius.is_finite() && region_radius > 0.0) {
        return Err(Error::Parameter(format!(
            "region radius must be finite and > 0, got {region_radius}"
        )));
    }
    Ok(())
}

/// Draw a Poisson count with the given mean.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng) as usize
}

fn uniform_in_disc<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> PointPolar {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random::<f64>() * 2.0 * PI;
    PointPolar::new(r, theta)
}

/// Homogeneous PPP on the disc of `region_radius`, sorted by distance.
///
/// A draw with a repeated distance (or a point exactly at the origin) is
/// discarded and redrawn so the order is strict.
pub fn sample_bs_ppp<R: Rng + ?Sized>(
    intensity: f64,
    region_radius: f64,
    rng: &mut R,
) -> Result<Vec<PointPolar>> {
    check_intensity(intensity)?;
    check_radius(region_radius)?;
    let mean = intensity * PI * region_radius * region_radius;
    loop {
        let n = poisson_count(mean, rng);
        let mut points: Vec<PointPolar> = (0..n)
            .map(|_| uniform_in_disc(region_radius, rng))
            .collect();
        points.sort_by(|a, b| a.r.total_cmp(&b.r));
        let strict =
            points.first().is_none_or(|p| p.r > 0.0) && points.windows(2).all(|w| w[0].r < w[1].r);
        if strict {
            return Ok(points);
        }
        log::debug!("resampling base-station draw with tied distances");
    }
}

/// Rectangle blockages with centers from a PPP on the disc of `region_radius`.
pub fn sample_blockages<R: Rng + ?Sized>(
    intensity: f64,
    region_radius: f64,
    marks: BlockageMarks,
    rng: &mut R,
) -> Result<Vec<Rectangle>> {
    check_intensity(intensity)?;
    check_radius(region_radius)?;
    marks.validate()?;
    let n = poisson_count(intensity * PI * region_radius * region_radius, rng);
    Ok((0..n)
        .map(|_| marks.draw(uniform_in_disc(region_radius, rng).to_cartesian(), rng))
        .collect())
}

/// Rectangle blockages with centers from a PPP on an axis-aligned box.
pub fn sample_blockages_in_box<R: Rng + ?Sized>(
    intensity: f64,
    min: Point,
    max: Point,
    marks: BlockageMarks,
    rng: &mut R,
) -> Result<Vec<Rectangle>> {
    check_intensity(intensity)?;
    marks.validate()?;
    let (dx, dy) = (max.x - min.x, max.y - min.y);
    if !(dx.is_finite() && dy.is_finite() && dx >= 0.0 && dy >= 0.0) {
        return Err(Error::Parameter("box corners out of order".into()));
    }
    let n = poisson_count(intensity * dx * dy, rng);
    Ok((0..n)
        .map(|_| {
            let c = Point::new(
                min.x + dx * rng.random::<f64>(),
                min.y + dy * rng.random::<f64>(),
            );
            marks.draw(c, rng)
        })
        .collect())
}

/// All blockages that could touch the segment from the origin to `(r, 0)`:
/// centers within half a diagonal of it. Rotating the whole field by `-θ`
/// turns a link at azimuth `θ` into this one, with orientation `φ - θ`.
pub fn sample_blockages_near_link<R: Rng + ?Sized>(
    intensity: f64,
    r: f64,
    theta: f64,
    marks: BlockageMarks,
    rng: &mut R,
) -> Result<Vec<Rectangle>> {
    let d = marks.half_diagonal();
    let rotated = BlockageMarks {
        orientation: match marks.orientation {
            Orientation::Fixed(phi) => Orientation::Fixed(phi - theta),
            Orientation::Uniform => Orientation::Uniform,
        },
        ..marks
    };
    sample_blockages_in_box(
        intensity,
        Point::new(-d, -d),
        Point::new(r + d, d),
        rotated,
        rng,
    )
}

/// True iff the closed segment `[a, b]` meets the closed rectangle.
///
/// The endpoints are moved into the rectangle's frame and the segment is
/// clipped against the axis-aligned box (Liang–Barsky).
pub fn segment_intersects_rectangle(a: Point, b: Point, rect: &Rectangle) -> Result<bool> {
    rect.check()?;
    Ok(segment_hits(a, b, rect))
}

fn segment_hits(a: Point, b: Point, rect: &Rectangle) -> bool {
    let (s, c) = (-rect.orientation).sin_cos();
    let to_local = |p: Point| {
        let x = p.x - rect.center.x;
        let y = p.y - rect.center.y;
        Point::new(c * x - s * y, s * x + c * y)
    };
    let p0 = to_local(a);
    let p1 = to_local(b);
    let hl = 0.5 * rect.length;
    let hw = 0.5 * rect.width;
    let dx = p1.x - p0.x;
    let dy = p1.y - p0.y;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, p0.x + hl),
        (dx, hl - p0.x),
        (-dy, p0.y + hw),
        (dy, hw - p0.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Number of rectangles touching the closed segment `[a, b]`.
pub fn count_blocking(a: Point, b: Point, blockages: &[Rectangle]) -> Result<usize> {
    let mut n = 0;
    for rect in blockages {
        if segment_intersects_rectangle(a, b, rect)? {
            n += 1;
        }
    }
    Ok(n)
}

/// A blockage field over the whole plane, generated one grid cell at a time.
///
/// Each cell's contents come from its own seeded stream, so the field is a
/// fixed function of `seed` regardless of which cells are visited or in what
/// order. Only cells that can reach a queried segment are ever generated.
pub struct LazyBlockageField {
    intensity: f64,
    marks: BlockageMarks,
    cell: f64,
    seed: u64,
    cells: HashMap<(i64, i64), Vec<Rectangle>>,
}

impl LazyBlockageField {
    pub fn new(intensity: f64, marks: BlockageMarks, seed: u64) -> Result<Self> {
        check_intensity(intensity)?;
        marks.validate()?;
        let reach = 4.0 * marks.half_diagonal();
        let cell = if intensity > 0.0 {
            reach.max(1.0 / intensity.sqrt())
        } else {
            reach
        };
        Ok(Self {
            intensity,
            marks,
            cell,
            seed,
            cells: HashMap::new(),
        })
    }

    fn contents(&mut self, key: (i64, i64)) -> &[Rectangle] {
        let (intensity, marks, cell, seed) = (self.intensity, self.marks, self.cell, self.seed);
        self.cells.entry(key).or_insert_with(|| {
            let mut rng = seeded(derive_seed(seed, &[key.0 as u64, key.1 as u64]));
            let n = poisson_count(intensity * cell * cell, &mut rng);
            let (x0, y0) = (key.0 as f64 * cell, key.1 as f64 * cell);
            (0..n)
                .map(|_| {
                    let c = Point::new(
                        x0 + cell * rng.random::<f64>(),
                        y0 + cell * rng.random::<f64>(),
                    );
                    marks.draw(c, &mut rng)
                })
                .collect()
        })
    }

    /// Visit, in order along the segment, every cell holding a center within
    /// half a diagonal of `[a, b]`. Stops early when `visit` returns true.
    fn walk<F: FnMut(&[Rectangle]) -> bool>(&mut self, a: Point, b: Point, mut visit: F) {
        if self.intensity == 0.0 {
            return;
        }
        let len = (b.x - a.x).hypot(b.y - a.y);
        let step = self.cell;
        let steps = (len / step).ceil().max(1.0) as usize;
        let reach = self.marks.half_diagonal() + 0.5 * step;
        let mut seen = HashSet::new();
        for m in 0..=steps {
            let t = (m as f64 / steps as f64).min(1.0);
            let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            let ix0 = ((p.x - reach) / self.cell).floor() as i64;
            let ix1 = ((p.x + reach) / self.cell).floor() as i64;
            let iy0 = ((p.y - reach) / self.cell).floor() as i64;
            let iy1 = ((p.y + reach) / self.cell).floor() as i64;
            for ix in ix0..=ix1 {
                for iy in iy0..=iy1 {
                    if seen.insert((ix, iy)) && visit(self.contents((ix, iy))) {
                        return;
                    }
                }
            }
        }
    }

    pub fn is_blocked(&mut self, a: Point, b: Point) -> bool {
        let mut blocked = false;
        self.walk(a, b, |rects| {
            blocked = rects.iter().any(|r| segment_hits(a, b, r));
            blocked
        });
        blocked
    }

    pub fn count_blocking(&mut self, a: Point, b: Point) -> usize {
        let mut n = 0;
        self.walk(a, b, |rects| {
            n += rects.iter().filter(|r| segment_hits(a, b, r)).count();
            false
        });
        n
    }

    /// Every rectangle generated so far.
    pub fn materialized(&self) -> impl Iterator<Item = &Rectangle> {
        self.cells.values().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathloss::{expected_blockage_count, NetworkParams};
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn rect() -> Rectangle {
        Rectangle::new(Point::new(50.0, 0.0), 15.0, 10.0, 0.0).unwrap()
    }

    #[test]
    fn predicate_examples() {
        let o = Point::ORIGIN;
        assert!(segment_intersects_rectangle(o, Point::new(100.0, 0.0), &rect()).unwrap());
        assert!(!segment_intersects_rectangle(o, Point::new(0.0, 100.0), &rect()).unwrap());
        // Endpoint exactly on the boundary counts as blocked.
        assert!(segment_intersects_rectangle(o, Point::new(42.5, 0.0), &rect()).unwrap());
        assert!(!segment_intersects_rectangle(o, Point::new(42.49, 0.0), &rect()).unwrap());
        // Grazing the top edge.
        assert!(segment_intersects_rectangle(
            Point::new(0.0, 5.0),
            Point::new(100.0, 5.0),
            &rect()
        )
        .unwrap());
        assert!(!segment_intersects_rectangle(
            Point::new(0.0, 5.001),
            Point::new(100.0, 5.001),
            &rect()
        )
        .unwrap());
        // Segment entirely inside.
        assert!(segment_intersects_rectangle(
            Point::new(49.0, 0.0),
            Point::new(51.0, 1.0),
            &rect()
        )
        .unwrap());
    }

    #[test]
    fn rotated_rectangle() {
        // A 15x10 rectangle turned by 90°: spans x ∈ [45, 55], y ∈ [-7.5, 7.5].
        let r = Rectangle::new(Point::new(50.0, 0.0), 15.0, 10.0, PI / 2.0).unwrap();
        assert!(
            segment_intersects_rectangle(Point::new(0.0, 7.0), Point::new(100.0, 7.0), &r).unwrap()
        );
        assert!(
            !segment_intersects_rectangle(Point::new(0.0, 0.0), Point::new(44.0, 0.0), &r).unwrap()
        );
    }

    #[test]
    fn degenerate_rectangle_rejected() {
        let flat = Rectangle {
            center: Point::ORIGIN,
            length: 0.0,
            width: 1.0,
            orientation: 0.0,
        };
        assert!(segment_intersects_rectangle(Point::ORIGIN, Point::new(1.0, 0.0), &flat).is_err());
        assert!(Rectangle::new(Point::ORIGIN, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn count_blocking_basics() {
        let o = Point::ORIGIN;
        assert_eq!(count_blocking(o, Point::new(100.0, 0.0), &[]).unwrap(), 0);
        let far = Rectangle::new(Point::new(500.0, 500.0), 15.0, 10.0, 0.0).unwrap();
        assert_eq!(
            count_blocking(o, Point::new(100.0, 0.0), &[far]).unwrap(),
            0
        );
        assert_eq!(
            count_blocking(o, Point::new(100.0, 0.0), &[far, rect(), rect()]).unwrap(),
            2
        );
    }

    #[test]
    fn empty_processes() {
        let mut rng = seeded(1);
        assert!(sample_bs_ppp(0.0, 100.0, &mut rng).unwrap().is_empty());
        let marks = BlockageMarks::fixed(15.0, 10.0, 0.0);
        assert!(sample_blockages(0.0, 100.0, marks, &mut rng)
            .unwrap()
            .is_empty());
        assert!(sample_bs_ppp(-1.0, 100.0, &mut rng).is_err());
        assert!(sample_bs_ppp(f64::NAN, 100.0, &mut rng).is_err());
        assert!(sample_blockages(f64::INFINITY, 100.0, marks, &mut rng).is_err());
    }

    #[test]
    fn bs_ppp_count_mean_variance_and_order() {
        let lambda = 1.0 / (800.0 * 800.0 * PI);
        let mut rng = seeded(11);
        let draws = 10_000;
        let mut counts = Vec::with_capacity(draws);
        for _ in 0..draws {
            let pts = sample_bs_ppp(lambda, 6400.0, &mut rng).unwrap();
            assert!(pts.windows(2).all(|w| w[0].r < w[1].r));
            assert!(pts
                .iter()
                .all(|p| p.r <= 6400.0 && (0.0..2.0 * PI).contains(&p.theta)));
            counts.push(pts.len() as f64);
        }
        let mean = counts.iter().sum::<f64>() / draws as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        // Mean 64, standard error 0.08.
        assert!((mean - 64.0).abs() < 0.3, "mean {mean}");
        assert!((var / mean - 1.0).abs() < 0.05, "var {var} mean {mean}");
    }

    #[test]
    fn blockage_count_mean_and_marks() {
        let marks = BlockageMarks::fixed(15.0, 10.0, 0.3);
        let mut rng = seeded(5);
        let draws = 400;
        let mut total = 0usize;
        for _ in 0..draws {
            let rects = sample_blockages(0.002, 500.0, marks, &mut rng).unwrap();
            assert!(rects.iter().all(|r| r.length == 15.0
                && r.width == 10.0
                && r.orientation == 0.3
                && r.center.norm() <= 500.0));
            total += rects.len();
        }
        let mean = total as f64 / draws as f64;
        let want = 0.002 * PI * 500.0 * 500.0;
        assert!((mean / want - 1.0).abs() < 0.01, "mean {mean} want {want}");
    }

    #[test]
    fn link_window_reproduces_mean_count() {
        // r = 100 at θ = 0 with φ = 0: mean 0.002·(100·10 + 150) = 2.3.
        let p = NetworkParams::default();
        let marks = BlockageMarks::fixed(p.l, p.w, p.phi);
        let mut rng = seeded(99);
        let draws = 100_000;
        let end = Point::new(100.0, 0.0);
        let mut sum = 0usize;
        for _ in 0..draws {
            let rects =
                sample_blockages_near_link(p.lambda_c, 100.0, 0.0, marks, &mut rng).unwrap();
            sum += count_blocking(Point::ORIGIN, end, &rects).unwrap();
        }
        let mean = sum as f64 / draws as f64;
        assert!((expected_blockage_count(100.0, 0.0, &p) - 2.3).abs() < 1e-12);
        assert!((mean - 2.3).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn lazy_field_is_order_independent() {
        let marks = BlockageMarks::fixed(15.0, 10.0, 0.0);
        let links: Vec<Point> = (0..40)
            .map(|i| PointPolar::new(20.0 + 15.0 * i as f64, i as f64 * 0.7).to_cartesian())
            .collect();
        let mut forward = LazyBlockageField::new(0.002, marks, 42).unwrap();
        let a: Vec<usize> = links
            .iter()
            .map(|&p| forward.count_blocking(Point::ORIGIN, p))
            .collect();
        let mut backward = LazyBlockageField::new(0.002, marks, 42).unwrap();
        let mut b: Vec<usize> = links
            .iter()
            .rev()
            .map(|&p| backward.count_blocking(Point::ORIGIN, p))
            .collect();
        b.reverse();
        assert_eq!(a, b);
        let mut check = LazyBlockageField::new(0.002, marks, 42).unwrap();
        for &p in &links {
            assert_eq!(
                check.is_blocked(Point::ORIGIN, p),
                check.count_blocking(Point::ORIGIN, p) > 0
            );
        }
    }

    #[test]
    fn lazy_field_finds_every_blocker() {
        // After walking a link, brute force over every generated rectangle
        // must agree with the cell walk.
        let marks = BlockageMarks::fixed(15.0, 10.0, 0.4);
        for seed in 0..20 {
            let mut field = LazyBlockageField::new(0.002, marks, seed).unwrap();
            let end = PointPolar::new(300.0, seed as f64).to_cartesian();
            let walked = field.count_blocking(Point::ORIGIN, end);
            let all: Vec<Rectangle> = field.materialized().copied().collect();
            assert_eq!(walked, count_blocking(Point::ORIGIN, end, &all).unwrap());
        }
    }

    proptest! {
        #[test]
        fn rotation_equivariance(
            ax in -100.0f64..100.0, ay in -100.0f64..100.0,
            bx in -100.0f64..100.0, by in -100.0f64..100.0,
            cx in -60.0f64..60.0, cy in -60.0f64..60.0,
            orient in 0.0f64..(2.0 * PI), angle in 0.0f64..(2.0 * PI),
        ) {
            let a = Point::new(ax, ay);
            let b = Point::new(bx, by);
            let r = Rectangle::new(Point::new(cx, cy), 15.0, 10.0, orient).unwrap();
            let turned = Rectangle::new(r.center.rotated(angle), 15.0, 10.0, orient + angle).unwrap();
            let before = segment_intersects_rectangle(a, b, &r).unwrap();
            let after = segment_intersects_rectangle(a.rotated(angle), b.rotated(angle), &turned).unwrap();
            prop_assert_eq!(before, after);
        }
    }
}
