//! Susceptance ⇄ scattering conversion for reciprocal lossless networks.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::arch::{self, ArchSpec};
use crate::error::{Error, Result};
use crate::numlin::{c64, singular_values, symmetry_defect, unitarity_defect, CMatrix, RMatrix};

pub const DEFAULT_Z0: f64 = 50.0;

/// Below this smallest singular value `I + θ` is treated as singular.
const MINUS_ONE_TOL: f64 = 1e-10;

/// Imaginary residue accepted (and dropped) when recovering `B` from `θ`.
const IMAG_RESIDUE_TOL: f64 = 1e-8;

/// Real symmetric susceptance matrix obeying an architecture mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Susceptance {
    b: RMatrix,
    spec: ArchSpec,
}

impl Susceptance {
    /// Checks exact symmetry and the mask.
    pub fn new(b: RMatrix, spec: ArchSpec) -> Result<Self> {
        let n = spec.n();
        if b.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "susceptance is {}x{}, architecture has N = {n}",
                b.nrows(),
                b.ncols()
            )));
        }
        if b != b.transpose() {
            return Err(Error::NotSymmetric {
                defect: (&b - b.transpose()).norm(),
            });
        }
        arch::vec_i(&b, &spec)?;
        Ok(Self { b, spec })
    }

    pub fn zeros(spec: ArchSpec) -> Self {
        Self {
            b: RMatrix::zeros(spec.n(), spec.n()),
            spec,
        }
    }

    /// Builds `B` from its independent variables.
    pub fn from_vars(vars: &DVector<f64>, spec: ArchSpec) -> Result<Self> {
        Ok(Self {
            b: arch::expand(vars, &spec)?,
            spec,
        })
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.b
    }
    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }
    pub fn vars(&self) -> DVector<f64> {
        arch::vec_i(&self.b, &self.spec).expect("susceptance obeys its mask by construction")
    }
    pub fn into_matrix(self) -> RMatrix {
        self.b
    }
}

/// Complex scattering matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scattering(pub CMatrix);

impl Scattering {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }
    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

/// `θ = (I + j z0 B)^{-1} (I − j z0 B)`.
pub fn scattering_from_susceptance(b: &Susceptance, z0: f64) -> Result<Scattering> {
    scattering_from_matrix(b.matrix(), z0)
}

/// Same as [`scattering_from_susceptance`] on a bare symmetric matrix.
pub fn scattering_from_matrix(b: &RMatrix, z0: f64) -> Result<Scattering> {
    if z0.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidParameter(format!(
            "reference impedance must be positive, got {z0}"
        )));
    }
    let n = b.nrows();
    let jzb = b.map(|x| c64(0.0, z0 * x));
    let id = CMatrix::identity(n, n);
    let lu = (&id + &jzb).lu();
    let theta = lu
        .solve(&(&id - &jzb))
        .ok_or_else(|| Error::SingularMatrix("I + j·z0·B".into()))?;
    Ok(Scattering(theta))
}

/// `B = (−j/z0) (I + θ)^{-1} (I − θ)`, dropping an imaginary residue below 1e-8.
pub fn susceptance_from_scattering(theta: &Scattering, z0: f64) -> Result<RMatrix> {
    let t = theta.matrix();
    let n = t.nrows();
    if t.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "scattering matrix is {}x{}",
            n,
            t.ncols()
        )));
    }
    let id = CMatrix::identity(n, n);
    let plus = &id + t;
    let smallest = singular_values(&plus)?.into_iter().fold(f64::INFINITY, f64::min);
    if smallest < MINUS_ONE_TOL {
        return Err(Error::SingularAtMinusOne);
    }
    let ratio = plus.lu().solve(&(&id - t)).ok_or(Error::SingularAtMinusOne)?;
    let b = ratio.map(|x| c64(0.0, -1.0 / z0) * x);
    let residue = b.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|x| x.re.abs()).fold(1.0, f64::max);
    if residue > IMAG_RESIDUE_TOL * scale {
        return Err(Error::DecompositionFailure(format!(
            "recovered susceptance has imaginary residue {residue:.3e}; input is not symmetric unitary"
        )));
    }
    let re = b.map(|x| x.re);
    Ok((&re + re.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringReport {
    pub unitarity_defect: f64,
    pub symmetry_defect: f64,
    pub pass: bool,
}

pub fn validate_scattering(theta: &CMatrix, tol: f64) -> Result<ScatteringReport> {
    if !theta.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "scattering matrix is {}x{}",
            theta.nrows(),
            theta.ncols()
        )));
    }
    let unitarity_defect = unitarity_defect(theta);
    let symmetry_defect = symmetry_defect(theta);
    Ok(ScatteringReport {
        unitarity_defect,
        symmetry_defect,
        pass: unitarity_defect < tol && symmetry_defect < tol,
    })
}

/// Writes a complex matrix as CSV, one matrix row per line, each entry as a
/// `re,im` column pair under a `c{j}_re,c{j}_im` header.
pub fn write_complex_csv<W: Write>(writer: W, m: &CMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (0..m.ncols())
        .flat_map(|j| [format!("c{j}_re"), format!("c{j}_im")])
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|j| [m[(i, j)].re.to_string(), m[(i, j)].im.to_string()])
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a real matrix as CSV under a `c{j}` header.
pub fn write_real_csv<W: Write>(writer: W, m: &RMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a square matrix written by [`write_complex_csv`] or
/// [`write_real_csv`]. A header row is optional. Rows with 2N fields are read
/// as `re,im` pairs, rows with N fields as real entries.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<CMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => rows.push(values),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", line + 1))),
        }
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse("no numeric rows".into()));
    }
    let width = rows[0].len();
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Parse(format!("row {} has a different number of fields", i + 1)));
    }
    if width == 2 * n {
        Ok(CMatrix::from_fn(n, n, |i, j| c64(rows[i][2 * j], rows[i][2 * j + 1])))
    } else if width == n {
        Ok(CMatrix::from_fn(n, n, |i, j| c64(rows[i][j], 0.0)))
    } else {
        Err(Error::Parse(format!(
            "{n} rows with {width} fields is neither an N×N real nor an N×N complex matrix"
        )))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
