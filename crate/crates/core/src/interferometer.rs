//! Single-particle transfer matrices.
//!
//! An [`Interferometer`] is an `M x M` unitary `U` whose entry `U[(j, i)]` is
//! the amplitude for a particle entering mode `i` to leave in mode `j`.
//! Unitaries come from the Haar measure, from trapped-ion transverse phonon
//! hopping evolved for a time `tau`, from a fixed eigenbasis with random
//! phases, or from one of the two noise models applied to those.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::rng::Seed;
use crate::CMatrix;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of a 171Yb+ ion, kg.
pub const YB171_MASS: f64 = 171.0 * ATOMIC_MASS_UNIT;

/// Unitarity tolerance every produced interferometer satisfies.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Where a unitary came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Haar {
        seed: Seed,
    },
    Ion {
        ions: usize,
        omega_z: f64,
        omega_x: f64,
        mass: f64,
        tau: f64,
    },
    /// Generic `exp(-i h tau)` of a caller-supplied Hamiltonian.
    Evolution {
        tau: f64,
    },
    RandomPhase {
        seed: Seed,
    },
    Noisy {
        base: Box<Provenance>,
        model: NoiseModel,
        strength: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<Seed>,
    },
    /// Anything else, kept verbatim.
    External(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&s)
    }
}

impl Provenance {
    /// Inverse of `Display`; unknown strings become [`Provenance::External`].
    pub fn parse(s: &str) -> Provenance {
        serde_json::from_str(s).unwrap_or_else(|_| Provenance::External(s.to_string()))
    }
}

/// The two device imperfections studied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Systematic relative error in the evolution time.
    Timing,
    /// Random relative error on every entry of the effective Hamiltonian.
    Hamiltonian,
}

/// Law of the per-entry multiplicative noise in [`perturb_hamiltonian`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    /// Standard normal.
    #[default]
    Gaussian,
    /// Uniform on `[-1, 1]`.
    Uniform,
}

impl NoiseLaw {
    fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            NoiseLaw::Gaussian => StandardNormal.sample(rng),
            NoiseLaw::Uniform => rng.random_range(-1.0..=1.0),
        }
    }
}

/// A unitary single-particle transfer matrix with its provenance.
#[derive(Clone, Debug)]
pub struct Interferometer {
    unitary: CMatrix,
    provenance: Provenance,
}

impl Interferometer {
    /// Wraps `unitary`, rejecting it unless `|U^dagger U - I|_max < 1e-10`.
    pub fn new(unitary: CMatrix, provenance: Provenance) -> Result<Self> {
        if !unitary.is_square() || unitary.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "unitary must be square and nonempty, got {}x{}",
                unitary.nrows(),
                unitary.ncols()
            )));
        }
        let residual = linalg::unitarity_residual(&unitary);
        if !(residual < UNITARITY_TOL) {
            return Err(Error::NotUnitary { residual });
        }
        Ok(Interferometer {
            unitary,
            provenance,
        })
    }

    pub fn modes(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.unitary
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn unitarity_residual(&self) -> f64 {
        linalg::unitarity_residual(&self.unitary)
    }

    /// Output modes relabeled by `perm`: row `perm[j]` of the result is row `j` of `U`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Self> {
        let m = self.modes();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("not a permutation of the output modes"));
        }
        let mut out = CMatrix::zeros(m, m);
        for (j, &pj) in perm.iter().enumerate() {
            out.set_row(pj, &self.unitary.row(j));
        }
        Interferometer::new(out, self.provenance.clone())
    }

    pub fn to_json(&self) -> UnitaryFile {
        let m = self.modes();
        UnitaryFile {
            m,
            provenance: self.provenance.to_string(),
            re: (0..m)
                .map(|i| (0..m).map(|j| self.unitary[(i, j)].re).collect())
                .collect(),
            im: (0..m)
                .map(|i| (0..m).map(|j| self.unitary[(i, j)].im).collect())
                .collect(),
        }
    }

    pub fn from_json(file: &UnitaryFile) -> Result<Self> {
        let m = file.m;
        let bad_rows = |rows: &Vec<Vec<f64>>| rows.len() != m || rows.iter().any(|r| r.len() != m);
        if bad_rows(&file.re) || bad_rows(&file.im) {
            return Err(Error::ShapeMismatch(format!(
                "unitary file declares m = {m} but carries a different shape"
            )));
        }
        let u = CMatrix::from_fn(m, m, |i, j| Complex64::new(file.re[i][j], file.im[i][j]));
        Interferometer::new(u, Provenance::parse(&file.provenance))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_json())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let file: UnitaryFile = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Interferometer::from_json(&file)
    }
}

/// On-disk JSON layout of a unitary. Floats are written in shortest
/// round-trip form so entries survive a save/load cycle bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitaryFile {
    pub m: usize,
    pub provenance: String,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Haar-random `M x M` unitary: QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal folded back into `Q`.
pub fn haar_unitary(modes: usize, seed: impl Into<Seed>) -> Result<Interferometer> {
    if modes == 0 {
        return Err(invalid("modes must be positive"));
    }
    let seed = seed.into();
    let mut rng = seed.rng();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut entries = Vec::with_capacity(modes * modes);
    for _ in 0..modes * modes {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        entries.push(Complex64::new(re * scale, im * scale));
    }
    let ginibre = CMatrix::from_row_slice(modes, modes, &entries);
    let qr = ginibre.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..modes {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for z in q.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    Interferometer::new(q, Provenance::Haar { seed })
}

const NEWTON_MAX_ITER: usize = 200;
const FORCE_TOL: f64 = 1e-12;

/// Net dimensionless force on each ion: `u_i - sum_{j<i} (u_i-u_j)^-2 + sum_{j>i} (u_i-u_j)^-2`.
pub fn axial_forces(u: &[f64]) -> Vec<f64> {
    let m = u.len();
    (0..m)
        .map(|i| {
            let mut f = u[i];
            for j in 0..m {
                if j != i {
                    let d = u[i] - u[j];
                    f -= d.signum() / (d * d);
                }
            }
            f
        })
        .collect()
}

/// Dimensionless axial equilibrium of `M` ions in a harmonic trap, ascending.
pub fn equilibrium_dimensionless(ions: usize) -> Result<Vec<f64>> {
    if ions < 2 {
        return Err(invalid("an ion chain needs at least two ions"));
    }
    let spacing = 2.018 / (ions as f64).powf(0.559);
    let center = (ions as f64 + 1.0) / 2.0;
    let mut u: Vec<f64> = (1..=ions).map(|i| spacing * (i as f64 - center)).collect();
    for _ in 0..NEWTON_MAX_ITER {
        let f = axial_forces(&u);
        if f.iter().all(|x| x.abs() < FORCE_TOL) {
            return Ok(u);
        }
        let mut jac = DMatrix::<f64>::zeros(ions, ions);
        for i in 0..ions {
            jac[(i, i)] = 1.0;
            for j in 0..ions {
                if j != i {
                    let c = 2.0 / (u[i] - u[j]).abs().powi(3);
                    jac[(i, i)] += c;
                    jac[(i, j)] = -c;
                }
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_vec(f))
            .ok_or(Error::NoConvergence {
                what: "ion equilibrium Newton solve",
                iterations: NEWTON_MAX_ITER,
            })?;
        for (ui, si) in u.iter_mut().zip(step.iter()) {
            *ui -= si;
        }
    }
    Err(Error::NoConvergence {
        what: "ion equilibrium Newton solve",
        iterations: NEWTON_MAX_ITER,
    })
}

/// Axial length scale `(e^2 / (4 pi eps0 m omega_z^2))^(1/3)`, meters.
pub fn axial_length_scale(mass: f64, omega_z: f64) -> f64 {
    let coulomb = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * PI * VACUUM_PERMITTIVITY);
    (coulomb / (mass * omega_z * omega_z)).cbrt()
}

/// Axial equilibrium positions in meters, ascending.
pub fn ion_equilibrium_positions(ions: usize, mass: f64, omega_z: f64) -> Result<Vec<f64>> {
    if !(mass > 0.0 && omega_z > 0.0) {
        return Err(invalid("mass and axial frequency must be positive"));
    }
    let scale = axial_length_scale(mass, omega_z);
    Ok(equilibrium_dimensionless(ions)?
        .into_iter()
        .map(|u| u * scale)
        .collect())
}

/// Hopping prefactor `t0 = e^2 / (8 pi eps0 m omega_x)`, in m^3 rad/s.
pub fn hopping_prefactor(mass: f64, omega_x: f64) -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (8.0 * PI * VACUUM_PERMITTIVITY * mass * omega_x)
}

/// Local-phonon hopping matrix in rad/s: `t0 / |z_i - z_j|^3` off the
/// diagonal and minus the row sum of those on it.
pub fn ion_hopping_matrix(positions: &[f64], mass: f64, omega_x: f64) -> Result<DMatrix<f64>> {
    if !(mass > 0.0 && omega_x > 0.0) {
        return Err(invalid("mass and transverse frequency must be positive"));
    }
    let m = positions.len();
    let t0 = hopping_prefactor(mass, omega_x);
    let mut h = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let d = (positions[i] - positions[j]).abs();
            if d == 0.0 || !d.is_finite() {
                return Err(invalid(format!("ions {i} and {j} coincide")));
            }
            let t = t0 / (d * d * d);
            h[(i, j)] = t;
            h[(j, i)] = t;
        }
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| h[(i, j)]).sum();
        h[(i, i)] = -off;
    }
    Ok(h)
}

/// A linear chain of identical ions with its transverse phonon hopping.
#[derive(Clone, Debug)]
pub struct IonChain {
    pub mass: f64,
    pub omega_z: f64,
    pub omega_x: f64,
    pub positions: Vec<f64>,
    pub hopping: DMatrix<f64>,
}

impl IonChain {
    pub fn new(ions: usize, mass: f64, omega_z: f64, omega_x: f64) -> Result<Self> {
        let positions = ion_equilibrium_positions(ions, mass, omega_z)?;
        let hopping = ion_hopping_matrix(&positions, mass, omega_x)?;
        Ok(IonChain {
            mass,
            omega_z,
            omega_x,
            positions,
            hopping,
        })
    }

    /// 171Yb+ chain with frequencies given in Hz (converted to rad/s).
    pub fn ytterbium(ions: usize, f_axial_hz: f64, f_transverse_hz: f64) -> Result<Self> {
        IonChain::new(ions, YB171_MASS, 2.0 * PI * f_axial_hz, 2.0 * PI * f_transverse_hz)
    }

    pub fn ions(&self) -> usize {
        self.positions.len()
    }

    pub fn hamiltonian(&self) -> CMatrix {
        self.hopping.map(|x| Complex64::new(x, 0.0))
    }

    /// Phonon propagator `exp(-i h tau)` for `tau` in seconds.
    pub fn evolve(&self, tau: f64) -> Result<Interferometer> {
        if !(tau >= 0.0) {
            return Err(invalid(format!("evolution time must be nonnegative, got {tau}")));
        }
        let u = linalg::exp_minus_i(&self.hamiltonian(), tau)?;
        Interferometer::new(u, self.provenance(tau))
    }

    fn provenance(&self, tau: f64) -> Provenance {
        Provenance::Ion {
            ions: self.ions(),
            omega_z: self.omega_z,
            omega_x: self.omega_x,
            mass: self.mass,
            tau,
        }
    }
}

/// `exp(-i h tau)` for a Hermitian `h` given in rad/s.
pub fn evolve(h: &CMatrix, tau: f64) -> Result<Interferometer> {
    linalg::check_hermitian(h)?;
    let u = linalg::exp_minus_i(h, tau)?;
    Interferometer::new(u, Provenance::Evolution { tau })
}

/// `V diag(e^{i theta_k}) V^dagger` with `V` the eigenvectors of `h` and
/// `theta_k` i.i.d. uniform on `[0, 2 pi)`.
pub fn random_phase_unitary(h: &CMatrix, seed: impl Into<Seed>) -> Result<Interferometer> {
    let seed = seed.into();
    let mut rng = seed.rng();
    let phases: Vec<f64> = (0..h.nrows())
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let u = random_phase_with(h, &phases)?;
    Interferometer::new(u, Provenance::RandomPhase { seed })
}

/// Fixed-eigenbasis unitary with caller-chosen phases.
pub fn random_phase_with(h: &CMatrix, phases: &[f64]) -> Result<CMatrix> {
    linalg::check_hermitian(h)?;
    if phases.len() != h.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} phases for a {}-mode Hamiltonian",
            phases.len(),
            h.nrows()
        )));
    }
    let (_, vecs) = linalg::hermitian_eigen(h)?;
    let diag: Vec<Complex64> = phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    Ok(linalg::recompose(&vecs, &diag))
}

/// The chain evolved for `tau * (1 + rel_error)` instead of `tau`.
pub fn perturb_timing(chain: &IonChain, tau: f64, rel_error: f64) -> Result<Interferometer> {
    let shifted = tau * (1.0 + rel_error);
    if !(shifted >= 0.0) {
        return Err(invalid(format!(
            "timing error {rel_error} makes the evolution time negative"
        )));
    }
    let u = chain.evolve(shifted)?;
    Ok(Interferometer {
        unitary: u.unitary,
        provenance: Provenance::Noisy {
            base: Box::new(chain.provenance(tau)),
            model: NoiseModel::Timing,
            strength: rel_error,
            seed: None,
        },
    })
}

/// Eigenphases closer than this to `-pi` are nudged onto the principal branch.
pub const BRANCH_CUT_NUDGE: f64 = 1e-9;

/// Hermitian `H` with `U = exp(-i H)`, i.e. `H = i log U` on the principal
/// branch (eigenphases of `U` in `(-pi, pi]`).
pub fn effective_hamiltonian(u: &Interferometer) -> Result<CMatrix> {
    let (vals, vecs) = linalg::unitary_eigen(u.unitary())?;
    let diag: Vec<Complex64> = vals
        .iter()
        .map(|z| {
            let mut phi = z.arg();
            if phi < -PI + BRANCH_CUT_NUDGE {
                phi += BRANCH_CUT_NUDGE;
            }
            Complex64::new(-phi, 0.0)
        })
        .collect();
    let h = linalg::recompose(&vecs, &diag);
    Ok((&h + h.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Multiplies each independent entry of the effective Hamiltonian by
/// `1 + eta * xi` (real and imaginary parts drawn separately, upper triangle
/// in row-major order) and returns the unitary it generates.
pub fn perturb_hamiltonian(
    u: &Interferometer,
    eta: f64,
    seed: impl Into<Seed>,
    law: NoiseLaw,
) -> Result<Interferometer> {
    if !(eta >= 0.0) {
        return Err(invalid(format!("noise strength must be nonnegative, got {eta}")));
    }
    let seed = seed.into();
    let h = effective_hamiltonian(u)?;
    let m = h.nrows();
    let mut rng = seed.rng();
    let mut noisy = CMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let re = h[(i, j)].re * (1.0 + eta * law.draw(&mut rng));
            let im = h[(i, j)].im * (1.0 + eta * law.draw(&mut rng));
            if i == j {
                noisy[(i, i)] = Complex64::new(re, 0.0);
            } else {
                noisy[(i, j)] = Complex64::new(re, im);
                noisy[(j, i)] = Complex64::new(re, -im);
            }
        }
    }
    let out = linalg::exp_minus_i(&noisy, 1.0)?;
    Interferometer::new(
        out,
        Provenance::Noisy {
            base: Box::new(u.provenance().clone()),
            model: NoiseModel::Hamiltonian,
            strength: eta,
            seed: Some(seed),
        },
    )
}
