use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PhaseError, Result};
use crate::io::{read_signals, write_signals};
use crate::signal::Signal;

/// Descriptive data attached to one atom.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomMeta {
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
}

/// Real atoms stored as the columns of an `N × D` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    atom_shape: Vec<usize>,
    meta: Vec<AtomMeta>,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>, atom_shape: &[usize]) -> Result<Self> {
        let meta = vec![AtomMeta::default(); atoms.ncols()];
        Self::with_meta(atoms, atom_shape, meta)
    }

    pub fn with_meta(atoms: DMatrix<f64>, atom_shape: &[usize], meta: Vec<AtomMeta>) -> Result<Self> {
        if atoms.ncols() == 0 {
            return Err(invalid("dictionary", "needs at least one atom"));
        }
        if atom_shape.iter().product::<usize>() != atoms.nrows() || atom_shape.is_empty() {
            return Err(PhaseError::ShapeMismatch(format!(
                "atoms of length {} for shape {atom_shape:?}",
                atoms.nrows()
            )));
        }
        if meta.len() != atoms.ncols() {
            return Err(PhaseError::ShapeMismatch(format!(
                "{} metadata entries for {} atoms",
                meta.len(),
                atoms.ncols()
            )));
        }
        if let Some(j) = (0..atoms.ncols()).find(|&j| atoms.column(j).norm() == 0.0) {
            return Err(invalid("dictionary", format!("atom {j} is zero")));
        }
        if let Some(i) = atoms.iter().position(|v| !v.is_finite()) {
            return Err(PhaseError::NonFinite(i));
        }
        Ok(Self {
            atoms,
            atom_shape: atom_shape.to_vec(),
            meta,
        })
    }

    pub fn identity(atom_shape: &[usize]) -> Result<Self> {
        let n = atom_shape.iter().product();
        Self::new(DMatrix::identity(n, n), atom_shape)
    }

    /// Atoms from real-valued signals of a common shape.
    pub fn from_signals(atoms: &[Signal], meta: Vec<AtomMeta>) -> Result<Self> {
        let first = atoms.first().ok_or_else(|| invalid("dictionary", "needs at least one atom"))?;
        let shape = first.shape().to_vec();
        let mut m = DMatrix::zeros(first.len(), atoms.len());
        for (j, a) in atoms.iter().enumerate() {
            if a.shape() != shape.as_slice() {
                return Err(PhaseError::ShapeMismatch(format!("atom {j} has shape {:?}", a.shape())));
            }
            if a.data().iter().any(|v| v.im != 0.0) {
                return Err(invalid("dictionary", format!("atom {j} is not real")));
            }
            for (i, v) in a.data().iter().enumerate() {
                m[(i, j)] = v.re;
            }
        }
        Self::with_meta(m, &shape, meta)
    }

    /// Reads atoms from the signal binary format and metadata from a JSON
    /// array; without a sidecar every atom gets default metadata.
    pub fn load(atoms: impl AsRef<Path>, sidecar: Option<&Path>) -> Result<Self> {
        let signals = read_signals(atoms)?;
        let meta = match sidecar {
            Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
            None => vec![AtomMeta::default(); signals.len()],
        };
        Self::from_signals(&signals, meta)
    }

    pub fn save(&self, atoms: impl AsRef<Path>, sidecar: Option<&Path>) -> Result<()> {
        let signals: Vec<Signal> = (0..self.len()).map(|j| self.atom(j)).collect();
        write_signals(atoms, &signals)?;
        if let Some(p) = sidecar {
            serde_json::to_writer_pretty(BufWriter::new(File::create(p)?), &self.meta)?;
        }
        Ok(())
    }

    /// Number of atoms `D`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    /// Samples per atom `N`.
    pub fn atom_len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn atom_shape(&self) -> &[usize] {
        &self.atom_shape
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn meta(&self) -> &[AtomMeta] {
        &self.meta
    }

    pub fn atom(&self, j: usize) -> Signal {
        let data = self.atoms.column(j).iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Signal::from_parts(self.atom_shape.clone(), data)
    }

    /// `Ψα`.
    pub fn synthesize(&self, code: &[Complex64]) -> Result<Signal> {
        if code.len() != self.len() {
            return Err(PhaseError::ShapeMismatch(format!(
                "code of length {} for {} atoms",
                code.len(),
                self.len()
            )));
        }
        let mut data = vec![Complex64::new(0.0, 0.0); self.atom_len()];
        for (j, &c) in code.iter().enumerate() {
            if c != Complex64::new(0.0, 0.0) {
                for (d, &a) in data.iter_mut().zip(self.atoms.column(j).iter()) {
                    *d += c * a;
                }
            }
        }
        Ok(Signal::from_parts(self.atom_shape.clone(), data))
    }
}
