//! Architecture catalog.
//!
//! Every supported architecture is a block-diagonal arrangement of `groups`
//! equal blocks, each block wired as a stem topology: the first `stems` ports
//! of the block connect to every port of the block, the remaining ports only
//! to those stems. Single, tree, fully, group, forest, stem and cluster
//! connectivity are all special cases of that layout.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::RMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Single,
    Fully,
    Group,
    #[serde(alias = "tree_arrowhead")]
    Tree,
    Forest,
    Stem,
    Cluster,
}

impl ArchKind {
    pub const ALL: [ArchKind; 7] = [
        ArchKind::Single,
        ArchKind::Fully,
        ArchKind::Group,
        ArchKind::Tree,
        ArchKind::Forest,
        ArchKind::Stem,
        ArchKind::Cluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Single => "single",
            ArchKind::Fully => "fully",
            ArchKind::Group => "group",
            ArchKind::Tree => "tree",
            ArchKind::Forest => "forest",
            ArchKind::Stem => "stem",
            ArchKind::Cluster => "cluster",
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(ArchKind::Single),
            "fully" => Ok(ArchKind::Fully),
            "group" => Ok(ArchKind::Group),
            "tree" | "tree_arrowhead" => Ok(ArchKind::Tree),
            "forest" => Ok(ArchKind::Forest),
            "stem" => Ok(ArchKind::Stem),
            "cluster" => Ok(ArchKind::Cluster),
            other => Err(Error::InvalidArch(format!("unknown architecture kind '{other}'"))),
        }
    }
}

/// Optional size parameters; which ones are required depends on the kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_g: Option<usize>,
}

/// A validated architecture with its size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawArch", into = "RawArch")]
pub struct ArchSpec {
    kind: ArchKind,
    n: usize,
    g: Option<usize>,
    q: Option<usize>,
    q_g: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawArch {
    kind: ArchKind,
    n: usize,
    #[serde(flatten)]
    params: ArchParams,
}

impl TryFrom<RawArch> for ArchSpec {
    type Error = Error;

    fn try_from(raw: RawArch) -> Result<Self> {
        make_arch(raw.kind, raw.n, raw.params)
    }
}

impl From<ArchSpec> for RawArch {
    fn from(spec: ArchSpec) -> Self {
        RawArch {
            kind: spec.kind,
            n: spec.n,
            params: spec.params(),
        }
    }
}

/// Block layout shared by all architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub groups: usize,
    pub size: usize,
    pub stems: usize,
}

impl BlockLayout {
    #[inline]
    pub fn connected(&self, i: usize, j: usize) -> bool {
        if i / self.size != j / self.size {
            return false;
        }
        i == j || i % self.size < self.stems || j % self.size < self.stems
    }
}

fn require(value: Option<usize>, kind: ArchKind, name: &str) -> Result<usize> {
    value.ok_or_else(|| Error::InvalidArch(format!("{kind} architecture requires parameter '{name}'")))
}

fn check_grouping(n: usize, g: usize) -> Result<()> {
    if g == 0 || !n.is_multiple_of(g) {
        return Err(Error::InvalidGrouping { n, g });
    }
    Ok(())
}

/// Validates size parameters and builds an [`ArchSpec`].
pub fn make_arch(kind: ArchKind, n: usize, params: ArchParams) -> Result<ArchSpec> {
    if n == 0 {
        return Err(Error::InvalidArch("element count N must be positive".into()));
    }
    let mut spec = ArchSpec {
        kind,
        n,
        g: None,
        q: None,
        q_g: None,
    };
    match kind {
        ArchKind::Single | ArchKind::Fully | ArchKind::Tree => {}
        ArchKind::Group | ArchKind::Forest => {
            let g = require(params.g, kind, "g")?;
            check_grouping(n, g)?;
            spec.g = Some(g);
        }
        ArchKind::Stem => {
            let q = require(params.q, kind, "q")?;
            if q >= n {
                return Err(Error::InvalidStemCount { q, limit: n });
            }
            spec.q = Some(q);
        }
        ArchKind::Cluster => {
            let g = require(params.g, kind, "g")?;
            check_grouping(n, g)?;
            let q_g = require(params.q_g, kind, "q_g")?;
            if q_g >= n / g {
                return Err(Error::InvalidStemCount { q: q_g, limit: n / g });
            }
            spec.g = Some(g);
            spec.q_g = Some(q_g);
        }
    }
    Ok(spec)
}

impl ArchSpec {
    pub fn single(n: usize) -> Result<Self> {
        make_arch(ArchKind::Single, n, ArchParams::default())
    }
    pub fn fully(n: usize) -> Result<Self> {
        make_arch(ArchKind::Fully, n, ArchParams::default())
    }
    pub fn tree(n: usize) -> Result<Self> {
        make_arch(ArchKind::Tree, n, ArchParams::default())
    }
    pub fn group(n: usize, g: usize) -> Result<Self> {
        make_arch(
            ArchKind::Group,
            n,
            ArchParams {
                g: Some(g),
                ..Default::default()
            },
        )
    }
    pub fn forest(n: usize, g: usize) -> Result<Self> {
        make_arch(
            ArchKind::Forest,
            n,
            ArchParams {
                g: Some(g),
                ..Default::default()
            },
        )
    }
    pub fn stem(n: usize, q: usize) -> Result<Self> {
        make_arch(
            ArchKind::Stem,
            n,
            ArchParams {
                q: Some(q),
                ..Default::default()
            },
        )
    }
    pub fn cluster(n: usize, g: usize, q_g: usize) -> Result<Self> {
        make_arch(
            ArchKind::Cluster,
            n,
            ArchParams {
                g: Some(g),
                q_g: Some(q_g),
                ..Default::default()
            },
        )
    }

    pub fn kind(&self) -> ArchKind {
        self.kind
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn g(&self) -> Option<usize> {
        self.g
    }
    pub fn q(&self) -> Option<usize> {
        self.q
    }
    pub fn q_g(&self) -> Option<usize> {
        self.q_g
    }
    pub fn params(&self) -> ArchParams {
        ArchParams {
            g: self.g,
            q: self.q,
            q_g: self.q_g,
        }
    }

    pub fn layout(&self) -> BlockLayout {
        let n = self.n;
        let whole = |stems| BlockLayout {
            groups: 1,
            size: n,
            stems,
        };
        let blocks = |g: usize, stems_of: &dyn Fn(usize) -> usize| {
            let size = n / g;
            BlockLayout {
                groups: g,
                size,
                stems: stems_of(size),
            }
        };
        match self.kind {
            ArchKind::Single => whole(0),
            ArchKind::Fully => whole(n - 1),
            ArchKind::Tree => whole(1.min(n - 1)),
            ArchKind::Stem => whole(self.q.unwrap_or(0)),
            ArchKind::Group => blocks(self.g.unwrap_or(1), &|s| s - 1),
            ArchKind::Forest => blocks(self.g.unwrap_or(1), &|s| 1.min(s - 1)),
            ArchKind::Cluster => {
                let q_g = self.q_g.unwrap_or(0);
                blocks(self.g.unwrap_or(1), &|_| q_g)
            }
        }
    }

    /// True for architectures whose susceptance is block-diagonal with more than one block.
    pub fn is_block_diagonal(&self) -> bool {
        self.layout().groups > 1
    }

    /// The stem architecture governing one diagonal block.
    pub fn block_spec(&self) -> ArchSpec {
        let layout = self.layout();
        ArchSpec {
            kind: ArchKind::Stem,
            n: layout.size,
            g: None,
            q: Some(layout.stems),
            q_g: None,
        }
    }

    /// Short human-readable label such as `stem(q=7)`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(g) = self.g {
            parts.push(format!("g={g}"));
        }
        if let Some(q) = self.q {
            parts.push(format!("q={q}"));
        }
        if let Some(q_g) = self.q_g {
            parts.push(format!("q_g={q_g}"));
        }
        if parts.is_empty() {
            self.kind.to_string()
        } else {
            format!("{}({})", self.kind, parts.join(","))
        }
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} N={}", self.label(), self.n)
    }
}

/// Binary symmetric N×N sparsity pattern of the susceptance matrix.
pub fn mask(spec: &ArchSpec) -> DMatrix<u8> {
    let layout = spec.layout();
    DMatrix::from_fn(spec.n, spec.n, |i, j| layout.connected(i, j) as u8)
}

/// Number of upper-triangular (diagonal included) non-zeros of an indicator matrix.
pub fn upper_count(indicator: &DMatrix<u8>) -> usize {
    let n = indicator.nrows();
    (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .filter(|&(i, j)| indicator[(i, j)] != 0)
        .count()
}

/// Cumulative count over the upper triangle in row-major order; zero entries
/// carry the running count forward, and the lower triangle mirrors the upper.
pub fn counting_matrix(indicator: &DMatrix<u8>) -> DMatrix<usize> {
    let n = indicator.nrows();
    let mut counts = DMatrix::zeros(n, n);
    let mut c = 0;
    for i in 0..n {
        for j in i..n {
            if indicator[(i, j)] != 0 {
                c += 1;
            }
            counts[(i, j)] = c;
        }
    }
    for i in 0..n {
        for j in 0..i {
            counts[(i, j)] = counts[(j, i)];
        }
    }
    counts
}

/// Number of independent tunable admittances.
pub fn circuit_complexity(spec: &ArchSpec) -> usize {
    let n = spec.n;
    match spec.kind {
        ArchKind::Single => n,
        ArchKind::Fully => n * (n + 1) / 2,
        ArchKind::Tree => 2 * n - 1,
        ArchKind::Forest => 2 * n - spec.g.unwrap_or(1),
        ArchKind::Group => n * (n / spec.g.unwrap_or(1) + 1) / 2,
        ArchKind::Stem => {
            let q = spec.q.unwrap_or(0);
            q * n + n - q * (q + 1) / 2
        }
        ArchKind::Cluster => {
            let g = spec.g.unwrap_or(1);
            let q_g = spec.q_g.unwrap_or(0);
            q_g * n + n - g * q_g * (q_g + 1) / 2
        }
    }
}

/// Sparse N²×n_b selection matrix mapping independent variables to `vec(B)`.
///
/// Row `m` (column-major index `i + j·N`) holds at most one 1, stored as its
/// zero-based column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformMatrix {
    n: usize,
    n_b: usize,
    rows: Vec<Option<usize>>,
}

impl TransformMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }
    pub fn ncols(&self) -> usize {
        self.n_b
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn row(&self, m: usize) -> Option<usize> {
        self.rows[m]
    }
    /// `(row, column)` of every non-zero entry.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().filter_map(|(m, c)| c.map(|c| (m, c)))
    }

    pub fn to_dense(&self) -> RMatrix {
        let mut out = RMatrix::zeros(self.rows.len(), self.n_b);
        for (m, c) in self.entries() {
            out[(m, c)] = 1.0;
        }
        out
    }

    /// `R · b`.
    pub fn apply(&self, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|c| c.map_or(0.0, |c| b[c])))
    }

    /// Diagonal of `R^T R`: how many times each variable appears in `vec(B)`.
    pub fn gram_diagonal(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_b];
        for (_, c) in self.entries() {
            d[c] += 1;
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct StructureMaps {
    pub spec: ArchSpec,
    pub indicator: DMatrix<u8>,
    pub counting: DMatrix<usize>,
    pub transform: TransformMatrix,
    pub n_b: usize,
}

pub fn transform_matrix(spec: &ArchSpec) -> StructureMaps {
    let n = spec.n;
    let indicator = mask(spec);
    let counting = counting_matrix(&indicator);
    let n_b = upper_count(&indicator);
    let rows = (0..n * n)
        .map(|m| {
            let (i, j) = (m % n, m / n);
            (indicator[(i, j)] != 0).then(|| counting[(i, j)] - 1)
        })
        .collect();
    StructureMaps {
        spec: *spec,
        indicator,
        counting,
        transform: TransformMatrix { n, n_b, rows },
        n_b,
    }
}

/// Extracts the independent entries of a masked symmetric matrix
/// (upper triangle, row-major).
pub fn vec_i(b: &RMatrix, spec: &ArchSpec) -> Result<DVector<f64>> {
    let n = spec.n;
    if b.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "expected {n}x{n} susceptance, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let layout = spec.layout();
    let mut out = Vec::with_capacity(circuit_complexity(spec));
    for i in 0..n {
        for j in 0..n {
            if layout.connected(i, j) {
                if j >= i {
                    out.push(b[(i, j)]);
                }
            } else if b[(i, j)] != 0.0 {
                return Err(Error::MaskViolation { row: i, col: j });
            }
        }
    }
    Ok(DVector::from_vec(out))
}

/// Rebuilds the symmetric masked matrix from its independent entries.
pub fn expand(b: &DVector<f64>, spec: &ArchSpec) -> Result<RMatrix> {
    let n = spec.n;
    let n_b = circuit_complexity(spec);
    if b.len() != n_b {
        return Err(Error::DimensionMismatch(format!(
            "expected {n_b} independent variables, got {}",
            b.len()
        )));
    }
    let layout = spec.layout();
    let mut out = RMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            if layout.connected(i, j) {
                out[(i, j)] = b[k];
                out[(j, i)] = b[k];
                k += 1;
            }
        }
    }
    Ok(out)
}
