//! Complex linear algebra and stochastic channel generation.
//!
//! Channels follow the BS–IRS–user layout: BS at the origin, IRSs on a
//! circle around it, users in a ring. BS–IRS and IRS–user links are Rician
//! (rank-one LOS steering term plus CN(0, 1) scatter), the direct BS–user
//! link is Rayleigh. Path loss is applied as an amplitude factor
//! `10^(PL_dB / 20)` so `|h|^2` carries the power gain.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::complex_gaussian;

/// Reference distance `d0` of the log-distance path loss model, metres.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

// ============================================================================
// ComplexMatrix
// ============================================================================

/// Dense row-major complex matrix. Column vectors are `n x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn column(data: Vec<Complex64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} plus {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Squared Frobenius norm, `tr(A^H A)`.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Squared norm of column `c`.
    pub fn column_norm_sq(&self, c: usize) -> f64 {
        (0..self.rows).map(|r| self[(r, c)].norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

// ============================================================================
// Geometry
// ============================================================================

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Azimuth of the line from `self` towards `other`, radians.
    pub fn azimuth_to(&self, other: &Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// Placement of the BS, the IRSs and the users on the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_position: Point,
    pub irs_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// Element spacing over wavelength, `d / lambda`.
    pub antenna_spacing_ratio: f64,
}

/// Parameters of the random deployment drawn by [`Geometry::sample`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentParams {
    pub irs_radius_m: f64,
    pub user_inner_radius_m: f64,
    pub user_outer_radius_m: f64,
    /// Users closer than this to any IRS are redrawn.
    pub min_separation_m: f64,
    pub antenna_spacing_ratio: f64,
}

impl Default for DeploymentParams {
    fn default() -> Self {
        Self {
            irs_radius_m: 100.0,
            user_inner_radius_m: 100.0,
            user_outer_radius_m: 120.0,
            min_separation_m: REFERENCE_DISTANCE_M,
            antenna_spacing_ratio: 0.5,
        }
    }
}

impl DeploymentParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.irs_radius_m > 0.0
            && self.user_inner_radius_m > 0.0
            && self.user_outer_radius_m >= self.user_inner_radius_m
            && self.min_separation_m >= 0.0
            && self.antenna_spacing_ratio > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid deployment parameters {self:?}")))
        }
    }
}

impl Geometry {
    /// IRSs uniform on the circle, users uniform (by area) in the ring.
    pub fn sample<R: Rng + ?Sized>(
        num_irs: usize,
        num_users: usize,
        params: &DeploymentParams,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        let bs = Point::new(0.0, 0.0);
        let irs_positions: Vec<Point> = (0..num_irs)
            .map(|_| {
                let a = rng.random::<f64>() * 2.0 * PI;
                Point::new(params.irs_radius_m * a.cos(), params.irs_radius_m * a.sin())
            })
            .collect();
        let (r0, r1) = (params.user_inner_radius_m, params.user_outer_radius_m);
        let mut user_positions = Vec::with_capacity(num_users);
        for _ in 0..num_users {
            let mut attempts = 0;
            loop {
                let a = rng.random::<f64>() * 2.0 * PI;
                let u: f64 = rng.random();
                let r = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
                let p = Point::new(r * a.cos(), r * a.sin());
                if irs_positions
                    .iter()
                    .all(|q| q.distance(&p) >= params.min_separation_m)
                {
                    user_positions.push(p);
                    break;
                }
                attempts += 1;
                if attempts > 10_000 {
                    return Err(Error::Config(
                        "could not place users away from the IRSs".into(),
                    ));
                }
            }
        }
        let g = Self {
            bs_position: bs,
            irs_positions,
            user_positions,
            antenna_spacing_ratio: params.antenna_spacing_ratio,
        };
        g.validate(num_irs, num_users)?;
        Ok(g)
    }

    pub fn num_irs(&self) -> usize {
        self.irs_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn validate(&self, num_irs: usize, num_users: usize) -> Result<()> {
        if self.irs_positions.len() != num_irs || self.user_positions.len() != num_users {
            return Err(Error::DimensionMismatch(format!(
                "geometry has {} IRSs / {} users, expected {num_irs} / {num_users}",
                self.irs_positions.len(),
                self.user_positions.len()
            )));
        }
        for (l, irs) in self.irs_positions.iter().enumerate() {
            if self.bs_position.distance(irs) <= 0.0 {
                return Err(Error::Domain(format!("IRS {l} coincides with the BS")));
            }
            for (k, u) in self.user_positions.iter().enumerate() {
                if irs.distance(u) <= 0.0 {
                    return Err(Error::Domain(format!("user {k} coincides with IRS {l}")));
                }
            }
        }
        for (k, u) in self.user_positions.iter().enumerate() {
            if self.bs_position.distance(u) <= 0.0 {
                return Err(Error::Domain(format!("user {k} coincides with the BS")));
            }
        }
        Ok(())
    }

    pub fn bs_irs_distance(&self, l: usize) -> f64 {
        self.bs_position.distance(&self.irs_positions[l])
    }

    pub fn irs_user_distance(&self, l: usize, k: usize) -> f64 {
        self.irs_positions[l].distance(&self.user_positions[k])
    }

    pub fn bs_user_distance(&self, k: usize) -> f64 {
        self.bs_position.distance(&self.user_positions[k])
    }
}

// ============================================================================
// Channel model
// ============================================================================

/// Large-scale and fading parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Path loss at `d0 = 1 m`, dB.
    pub pl0_db: f64,
    pub kappa_bs_irs: f64,
    pub kappa_irs_user: f64,
    /// Exponent of the direct Rayleigh link.
    pub kappa_bs_user: f64,
    pub rician_bs_irs: f64,
    pub rician_irs_user: f64,
    pub noise_power_dbm: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            pl0_db: 30.0,
            kappa_bs_irs: 2.0,
            kappa_irs_user: 2.8,
            kappa_bs_user: 3.5,
            rician_bs_irs: 10.0,
            rician_irs_user: 10.0,
            noise_power_dbm: -80.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rician_bs_irs >= 0.0 && self.rician_irs_user >= 0.0) {
            return Err(Error::Config("Rician factors must be >= 0".into()));
        }
        if !(self.kappa_bs_irs > 0.0 && self.kappa_irs_user > 0.0 && self.kappa_bs_user > 0.0) {
            return Err(Error::Config("path-loss exponents must be > 0".into()));
        }
        if !self.pl0_db.is_finite() || !self.noise_power_dbm.is_finite() {
            return Err(Error::Config("pl0_db and noise_power_dbm must be finite".into()));
        }
        Ok(())
    }

    pub fn noise_power_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm)
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Array sizes: BS antennas and per-IRS element counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayDims {
    pub bs_antennas: usize,
    pub irs_elements: Vec<usize>,
}

/// One block-fading realisation of every link.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// `H_l^BR`, `N_l x M`.
    pub bs_irs: Vec<ComplexMatrix>,
    /// `h_{l,k}^RU`, `N_l x 1`, indexed `[l][k]`.
    pub irs_user: Vec<Vec<ComplexMatrix>>,
    /// `h_k^BU`, `M x 1`.
    pub bs_user: Vec<ComplexMatrix>,
}

impl ChannelSet {
    pub fn num_irs(&self) -> usize {
        self.bs_irs.len()
    }

    pub fn num_users(&self) -> usize {
        self.bs_user.len()
    }

    pub fn bs_antennas(&self) -> usize {
        self.bs_user.first().map_or(0, |h| h.rows())
    }

    /// Every entry of every link in draw order.
    pub fn entries(&self) -> impl Iterator<Item = &Complex64> {
        self.bs_irs
            .iter()
            .chain(self.irs_user.iter().flatten())
            .chain(self.bs_user.iter())
            .flat_map(|m| m.as_slice().iter())
    }
}

/// `a_n(angle)`: entry `k` is `exp(-j 2 pi ratio k sin(angle))`.
pub fn steering_vector(n: usize, angle: f64, spacing_ratio: f64) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("steering vector of length 0".into()));
    }
    let step = -2.0 * PI * spacing_ratio * angle.sin();
    let data = (0..n)
        .map(|k| Complex64::from_polar(1.0, step * k as f64))
        .collect();
    Ok(ComplexMatrix::column(data))
}

/// `PL_dB = pl0_db - 10 exponent log10(d / d0)`.
pub fn path_loss_db(distance: f64, exponent: f64, pl0_db: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("distance {distance} must be > 0")));
    }
    Ok(pl0_db - 10.0 * exponent * (distance / REFERENCE_DISTANCE_M).log10())
}

/// Amplitude factor `10^(PL_dB / 20)`.
pub fn path_loss_linear(distance: f64, exponent: f64, pl0_db: f64) -> Result<f64> {
    Ok(10f64.powf(path_loss_db(distance, exponent, pl0_db)? / 20.0))
}

/// LOS/NLOS amplitude weights `(sqrt(eps/(1+eps)), sqrt(1/(1+eps)))`.
pub fn rician_weights(factor: f64) -> (f64, f64) {
    let los = factor / (1.0 + factor);
    let nlos = 1.0 / (1.0 + factor);
    (los.sqrt(), nlos.sqrt())
}

/// Draws `H_l^BR`, `h_{l,k}^RU` and `h_k^BU` for one slot.
///
/// Draw order is fixed (BS–IRS matrices, then IRS–user vectors by `(l, k)`,
/// then direct links) so a seed reproduces the whole set.
pub fn draw_channels<R: Rng + ?Sized>(
    geometry: &Geometry,
    dims: &ArrayDims,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<ChannelSet> {
    let num_irs = dims.irs_elements.len();
    if geometry.num_irs() != num_irs {
        return Err(Error::DimensionMismatch(format!(
            "geometry has {} IRSs, dims has {num_irs}",
            geometry.num_irs()
        )));
    }
    if dims.bs_antennas == 0 || dims.irs_elements.iter().any(|&n| n == 0) {
        return Err(Error::InvalidDimension("zero antennas or elements".into()));
    }
    let m = dims.bs_antennas;
    let ratio = geometry.antenna_spacing_ratio;
    let (los1, nlos1) = rician_weights(params.rician_bs_irs);
    let (los2, nlos2) = rician_weights(params.rician_irs_user);

    let mut bs_irs = Vec::with_capacity(num_irs);
    for (l, &n) in dims.irs_elements.iter().enumerate() {
        let irs = &geometry.irs_positions[l];
        let pl = path_loss_linear(geometry.bs_irs_distance(l), params.kappa_bs_irs, params.pl0_db)?;
        let departure = geometry.bs_position.azimuth_to(irs);
        let arrival = irs.azimuth_to(&geometry.bs_position);
        let a_irs = steering_vector(n, arrival, ratio)?;
        let a_bs = steering_vector(m, departure, ratio)?;
        let los = a_irs.matmul(&a_bs.hermitian())?;
        let mut h = ComplexMatrix::zeros(n, m);
        for (e, l_e) in h.as_mut_slice().iter_mut().zip(los.as_slice()) {
            *e = (l_e * los1 + complex_gaussian(rng) * nlos1) * pl;
        }
        bs_irs.push(h);
    }

    let mut irs_user = Vec::with_capacity(num_irs);
    for (l, &n) in dims.irs_elements.iter().enumerate() {
        let irs = &geometry.irs_positions[l];
        let mut per_user = Vec::with_capacity(geometry.num_users());
        for (k, user) in geometry.user_positions.iter().enumerate() {
            let pl = path_loss_linear(
                geometry.irs_user_distance(l, k),
                params.kappa_irs_user,
                params.pl0_db,
            )?;
            let a = steering_vector(n, irs.azimuth_to(user), ratio)?;
            let data = a
                .as_slice()
                .iter()
                .map(|s| (s * los2 + complex_gaussian(rng) * nlos2) * pl)
                .collect();
            per_user.push(ComplexMatrix::column(data));
        }
        irs_user.push(per_user);
    }

    let mut bs_user = Vec::with_capacity(geometry.num_users());
    for k in 0..geometry.num_users() {
        let pl = path_loss_linear(geometry.bs_user_distance(k), params.kappa_bs_user, params.pl0_db)?;
        let data = (0..m).map(|_| complex_gaussian(rng) * pl).collect();
        bs_user.push(ComplexMatrix::column(data));
    }

    Ok(ChannelSet {
        bs_irs,
        irs_user,
        bs_user,
    })
}
