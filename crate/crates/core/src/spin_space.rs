//! State representations over the full many-body configuration basis and
//! high-performance application of site-local constrained operators.
//!
//! Basis ordinals use little-endian positional encoding: site 0 is the least
//! significant digit, `ordinal = sum_k level_k * local_dim^k`. For two-level
//! chains bit `k` of the ordinal is the occupation `n_k`, so neighbour levels
//! come out of shifts and masks. Operators are never materialised globally
//! except through the dense oracle in [`dense_matrix_of`], which is capped at
//! [`ORACLE_CAP`] basis states.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub type C64 = num_complex::Complex64;

/// Largest state-space dimension for which dense matrix oracles may be built.
pub const ORACLE_CAP: usize = 4096;

/// Boundary condition of the chain.
///
/// Under `Open`, constraint factors that refer to a missing neighbour are
/// replaced by the identity (the factor drops out). A single-site chain has
/// no neighbours at all, so every constraint evaluates to 1 there regardless
/// of the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Open,
}

/// Kinetic constraint families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// f_k = 1.
    Unconstrained,
    /// East: f_k = n_{k+1}.
    East,
    /// Fredrickson–Andersen: f_k = n_{k+1} + n_{k-1} - n_{k+1} n_{k-1}.
    Fa,
    /// Excluded volume: f_k = p_{k-1} p_{k+1}, both neighbours in the ground level.
    ExcludedVolume,
}

/// A kinetic constraint bound to a boundary condition.
///
/// `n_j` projects a neighbour onto its top level (`local_dim - 1`) and `p_j`
/// onto its ground level, so the same evaluation rules serve two-level KCMs
/// and the three-level EIT chain. The constraint never involves the target
/// site itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub boundary: Boundary,
}

impl ConstraintSpec {
    pub fn new(kind: ConstraintKind, boundary: Boundary) -> Self {
        Self { kind, boundary }
    }

    pub fn unconstrained() -> Self {
        Self::new(ConstraintKind::Unconstrained, Boundary::Periodic)
    }

    fn neighbor(&self, site: usize, delta: isize, n_sites: usize) -> Option<usize> {
        if n_sites == 1 {
            return None;
        }
        let shifted = site as isize + delta;
        match self.boundary {
            Boundary::Periodic => Some(shifted.rem_euclid(n_sites as isize) as usize),
            Boundary::Open => (0..n_sites as isize)
                .contains(&shifted)
                .then_some(shifted as usize),
        }
    }

    /// Evaluate f_k on a basis ordinal. Branches on neighbour levels only.
    #[inline]
    pub fn permits(&self, ordinal: usize, site: usize, layout: BasisLayout) -> bool {
        let n = layout.n_sites;
        let top = layout.local_dim - 1;
        match self.kind {
            ConstraintKind::Unconstrained => true,
            ConstraintKind::East => match self.neighbor(site, 1, n) {
                Some(j) => layout.level(ordinal, j) == top,
                None => true,
            },
            ConstraintKind::Fa => {
                let right = self.neighbor(site, 1, n);
                let left = self.neighbor(site, -1, n);
                match (left, right) {
                    (Some(l), Some(r)) => {
                        layout.level(ordinal, l) == top || layout.level(ordinal, r) == top
                    }
                    // A missing neighbour factor is the identity, which makes
                    // the complement-product form 1 - (1-n_l)(1-n_r) collapse to 1.
                    _ => true,
                }
            }
            ConstraintKind::ExcludedVolume => {
                let ok = |j: Option<usize>| match j {
                    Some(j) => layout.level(ordinal, j) == 0,
                    None => true,
                };
                ok(self.neighbor(site, -1, n)) && ok(self.neighbor(site, 1, n))
            }
        }
    }

    /// Evaluate f_k on an explicit configuration.
    pub fn permits_config(&self, config: &SpinConfiguration, site: usize) -> bool {
        self.permits(config.ordinal(), site, config.layout())
    }
}

/// Basis bookkeeping: number of sites and local dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisLayout {
    pub n_sites: usize,
    pub local_dim: u8,
}

impl BasisLayout {
    pub fn new(n_sites: usize, local_dim: u8) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidSpec("n_sites must be positive".into()));
        }
        if local_dim != 2 && local_dim != 3 {
            return Err(Error::InvalidSpec(format!(
                "local_dim must be 2 or 3, got {local_dim}"
            )));
        }
        // Guard against ordinal overflow; the dense oracle cap is far below this.
        if n_sites > 38 {
            return Err(Error::InvalidSpec(format!(
                "n_sites = {n_sites} exceeds the addressable range"
            )));
        }
        Ok(Self { n_sites, local_dim })
    }

    /// Total number of basis states, `local_dim^n_sites`.
    #[inline]
    pub fn dim(&self) -> usize {
        (self.local_dim as usize).pow(self.n_sites as u32)
    }

    /// Positional stride of `site`, `local_dim^site`.
    #[inline]
    pub fn stride(&self, site: usize) -> usize {
        if self.local_dim == 2 {
            1 << site
        } else {
            (self.local_dim as usize).pow(site as u32)
        }
    }

    /// Level of `site` in the basis state `ordinal`.
    #[inline]
    pub fn level(&self, ordinal: usize, site: usize) -> u8 {
        if self.local_dim == 2 {
            ((ordinal >> site) & 1) as u8
        } else {
            ((ordinal / self.stride(site)) % self.local_dim as usize) as u8
        }
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return Err(Error::SiteOutOfRange {
                site,
                n_sites: self.n_sites,
            });
        }
        Ok(())
    }
}

/// A classical basis label: one level index per site.
///
/// The string form reads left to right as sites `0..N`, e.g. `"110"` has
/// sites 0 and 1 excited on a three-site two-level chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    sites: Vec<u8>,
    local_dim: u8,
}

impl SpinConfiguration {
    pub fn new(sites: Vec<u8>, local_dim: u8) -> Result<Self> {
        let layout = BasisLayout::new(sites.len(), local_dim)?;
        if let Some(&bad) = sites.iter().find(|&&s| s >= local_dim) {
            return Err(Error::InvalidSpec(format!(
                "site level {bad} out of range for local_dim {local_dim}"
            )));
        }
        let _ = layout;
        Ok(Self { sites, local_dim })
    }

    /// All sites in the ground level.
    pub fn all_down(n_sites: usize, local_dim: u8) -> Self {
        Self {
            sites: vec![0; n_sites],
            local_dim,
        }
    }

    /// All sites excited (two-level chains).
    pub fn all_up(n_sites: usize) -> Self {
        Self {
            sites: vec![1; n_sites],
            local_dim: 2,
        }
    }

    pub fn from_ordinal(ordinal: usize, layout: BasisLayout) -> Self {
        let sites = (0..layout.n_sites)
            .map(|k| layout.level(ordinal, k))
            .collect();
        Self {
            sites,
            local_dim: layout.local_dim,
        }
    }

    /// Decode `ordinal` into this configuration in place (no allocation).
    pub fn decode_from(&mut self, ordinal: usize) {
        let layout = self.layout();
        for k in 0..self.sites.len() {
            self.sites[k] = layout.level(ordinal, k);
        }
    }

    /// Little-endian basis ordinal of this configuration.
    pub fn ordinal(&self) -> usize {
        let ld = self.local_dim as usize;
        self.sites
            .iter()
            .rev()
            .fold(0usize, |acc, &s| acc * ld + s as usize)
    }

    pub fn layout(&self) -> BasisLayout {
        BasisLayout {
            n_sites: self.sites.len(),
            local_dim: self.local_dim,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn local_dim(&self) -> u8 {
        self.local_dim
    }

    pub fn level(&self, site: usize) -> u8 {
        self.sites[site]
    }

    pub fn set_level(&mut self, site: usize, level: u8) {
        debug_assert!(level < self.local_dim);
        self.sites[site] = level;
    }

    pub fn sites(&self) -> &[u8] {
        &self.sites
    }

    /// Whether `site` is in the top (excited) level.
    #[inline]
    pub fn is_excited(&self, site: usize) -> bool {
        self.sites[site] == self.local_dim - 1
    }

    /// Occupation n_k of the top level (0 or 1).
    #[inline]
    pub fn occupation(&self, site: usize) -> f64 {
        if self.is_excited(site) {
            1.0
        } else {
            0.0
        }
    }

    pub fn excitation_count(&self) -> usize {
        self.sites.iter().filter(|&&s| s == self.local_dim - 1).count()
    }
}

impl std::str::FromStr for SpinConfiguration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let sites: Vec<u8> = s
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::InvalidSpec(format!("invalid level digit '{c}'")))
            })
            .collect::<Result<_>>()?;
        let local_dim = if sites.iter().any(|&s| s > 1) { 3 } else { 2 };
        Self::new(sites, local_dim)
    }
}

impl std::fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.sites {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Complex amplitude vector over the configuration basis with a cached
/// squared norm.
#[derive(Clone, Debug)]
pub struct PureState {
    amplitudes: Vec<C64>,
    squared_norm: f64,
    layout: BasisLayout,
}

impl PureState {
    pub fn from_amplitudes(amplitudes: Vec<C64>, layout: BasisLayout) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                state_dim: amplitudes.len(),
                expected: layout.dim(),
            });
        }
        let squared_norm = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        Ok(Self {
            amplitudes,
            squared_norm,
            layout,
        })
    }

    /// The computational basis state |config⟩.
    pub fn basis_state(config: &SpinConfiguration) -> Self {
        let layout = config.layout();
        let mut amplitudes = vec![C64::ZERO; layout.dim()];
        amplitudes[config.ordinal()] = C64::ONE;
        Self {
            amplitudes,
            squared_norm: 1.0,
            layout,
        }
    }

    /// Product state with per-site single-particle amplitudes
    /// (`factors[k]` has length `local_dim`).
    pub fn product_state(factors: &[Vec<C64>], local_dim: u8) -> Result<Self> {
        let layout = BasisLayout::new(factors.len(), local_dim)?;
        for f in factors {
            if f.len() != local_dim as usize {
                return Err(Error::DimensionMismatch {
                    state_dim: f.len(),
                    expected: local_dim as usize,
                });
            }
        }
        let dim = layout.dim();
        let mut amplitudes = Vec::with_capacity(dim);
        for ordinal in 0..dim {
            let mut a = C64::ONE;
            for (k, f) in factors.iter().enumerate() {
                a *= f[layout.level(ordinal, k) as usize];
            }
            amplitudes.push(a);
        }
        Self::from_amplitudes(amplitudes, layout)
    }

    pub fn layout(&self) -> BasisLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_sites(&self) -> usize {
        self.layout.n_sites
    }

    pub fn local_dim(&self) -> u8 {
        self.layout.local_dim
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, ordinal: usize) -> C64 {
        self.amplitudes[ordinal]
    }

    pub fn squared_norm(&self) -> f64 {
        self.squared_norm
    }

    /// Whether the cached squared norm is within 1e-10 of unity.
    pub fn is_normalized(&self) -> bool {
        (self.squared_norm - 1.0).abs() <= 1e-10
    }

    pub fn normalize(&mut self) -> Result<()> {
        if self.squared_norm <= 0.0 {
            return Err(Error::Unnormalized { squared_norm: 0.0 });
        }
        let inv = 1.0 / self.squared_norm.sqrt();
        for a in &mut self.amplitudes {
            *a *= inv;
        }
        self.squared_norm = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub(crate) fn recompute_norm(&mut self) {
        self.squared_norm = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut Vec<C64> {
        &mut self.amplitudes
    }

    /// Σ_C |⟨C|ψ⟩|² O(C) for an observable diagonal in the configuration basis.
    ///
    /// Errors if the state is not normalized; renormalise first.
    pub fn expectation_diagonal(&self, observable: impl Fn(&SpinConfiguration) -> f64) -> Result<f64> {
        if !self.is_normalized() {
            return Err(Error::Unnormalized {
                squared_norm: self.squared_norm,
            });
        }
        let mut scratch = SpinConfiguration::all_down(self.layout.n_sites, self.layout.local_dim);
        let mut acc = 0.0;
        for (ordinal, a) in self.amplitudes.iter().enumerate() {
            let w = a.norm_sqr();
            if w == 0.0 {
                continue;
            }
            scratch.decode_from(ordinal);
            acc += w * observable(&scratch);
        }
        Ok(acc)
    }

    /// ⟨ψ|op|ψ⟩.
    pub fn expectation_local(&self, op: &LocalOperator) -> Result<C64> {
        if !self.is_normalized() {
            return Err(Error::Unnormalized {
                squared_norm: self.squared_norm,
            });
        }
        op.validate(self.layout)?;
        let mut buf = vec![C64::ZERO; self.dim()];
        op.accumulate(self.layout, &self.amplitudes, &mut buf);
        Ok(self
            .amplitudes
            .iter()
            .zip(&buf)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// Local action on one site: a `local_dim x local_dim` complex matrix.
///
/// Stored as a fixed 3x3 block with the top-left `local_dim` square active;
/// element `(to, from)` is the amplitude for `|to⟩⟨from|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalAction {
    local_dim: u8,
    elems: [[C64; 3]; 3],
}

impl LocalAction {
    pub fn from_rows_2(rows: [[C64; 2]; 2]) -> Self {
        let mut elems = [[C64::ZERO; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                elems[i][j] = v;
            }
        }
        Self { local_dim: 2, elems }
    }

    pub fn from_rows_3(rows: [[C64; 3]; 3]) -> Self {
        Self {
            local_dim: 3,
            elems: rows,
        }
    }

    pub fn zero(local_dim: u8) -> Self {
        Self {
            local_dim,
            elems: [[C64::ZERO; 3]; 3],
        }
    }

    pub fn identity(local_dim: u8) -> Self {
        let mut m = Self::zero(local_dim);
        for i in 0..local_dim as usize {
            m.elems[i][i] = C64::ONE;
        }
        m
    }

    /// |to⟩⟨from| on a `local_dim`-level site.
    pub fn transition(local_dim: u8, to: u8, from: u8) -> Self {
        let mut m = Self::zero(local_dim);
        m.elems[to as usize][from as usize] = C64::ONE;
        m
    }

    /// σ⁻ = |0⟩⟨1| on a two-level site.
    pub fn sigma_minus() -> Self {
        Self::transition(2, 0, 1)
    }

    /// σ⁺ = |1⟩⟨0| on a two-level site.
    pub fn sigma_plus() -> Self {
        Self::transition(2, 1, 0)
    }

    /// σˣ = |0⟩⟨1| + |1⟩⟨0|.
    pub fn sigma_x() -> Self {
        let one = C64::ONE;
        Self::from_rows_2([[C64::ZERO, one], [one, C64::ZERO]])
    }

    /// Occupation n = |1⟩⟨1| on a two-level site.
    pub fn number() -> Self {
        Self::transition(2, 1, 1)
    }

    /// Projector onto `level`.
    pub fn level_projector(local_dim: u8, level: u8) -> Self {
        Self::transition(local_dim, level, level)
    }

    /// Ground projector p = |0⟩⟨0|.
    pub fn ground_projector(local_dim: u8) -> Self {
        Self::level_projector(local_dim, 0)
    }

    /// Rank-one action |ket⟩⟨bra|.
    pub fn outer(ket: &[C64], bra: &[C64]) -> Self {
        debug_assert_eq!(ket.len(), bra.len());
        let ld = ket.len() as u8;
        let mut m = Self::zero(ld);
        for (i, &k) in ket.iter().enumerate() {
            for (j, &b) in bra.iter().enumerate() {
                m.elems[i][j] = k * b.conj();
            }
        }
        m
    }

    pub fn local_dim(&self) -> u8 {
        self.local_dim
    }

    #[inline]
    pub fn get(&self, to: usize, from: usize) -> C64 {
        self.elems[to][from]
    }

    pub fn dagger(&self) -> Self {
        let mut m = Self::zero(self.local_dim);
        for i in 0..self.local_dim as usize {
            for j in 0..self.local_dim as usize {
                m.elems[i][j] = self.elems[j][i].conj();
            }
        }
        m
    }

    /// Matrix product `self * rhs` on the local site.
    pub fn mul(&self, rhs: &Self) -> Self {
        debug_assert_eq!(self.local_dim, rhs.local_dim);
        let ld = self.local_dim as usize;
        let mut m = Self::zero(self.local_dim);
        for i in 0..ld {
            for j in 0..ld {
                let mut acc = C64::ZERO;
                for k in 0..ld {
                    acc += self.elems[i][k] * rhs.elems[k][j];
                }
                m.elems[i][j] = acc;
            }
        }
        m
    }
}

/// A constrained single-site operator:
/// `prefactor x (constraint projector on neighbours) x (local_action on target_site)`.
///
/// Application touches each amplitude a bounded number of times; no global
/// matrix is ever formed outside the dense oracle.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    pub target_site: usize,
    pub local_action: LocalAction,
    pub constraint: ConstraintSpec,
    pub prefactor: C64,
}

impl LocalOperator {
    pub fn new(
        target_site: usize,
        local_action: LocalAction,
        constraint: ConstraintSpec,
        prefactor: C64,
    ) -> Self {
        Self {
            target_site,
            local_action,
            constraint,
            prefactor,
        }
    }

    /// Operator without a kinetic constraint.
    pub fn unconstrained(target_site: usize, local_action: LocalAction, prefactor: C64) -> Self {
        Self::new(
            target_site,
            local_action,
            ConstraintSpec::unconstrained(),
            prefactor,
        )
    }

    /// The identity map on an `n_sites`-chain (acts on site 0).
    pub fn identity(local_dim: u8) -> Self {
        Self::unconstrained(0, LocalAction::identity(local_dim), C64::ONE)
    }

    pub fn validate(&self, layout: BasisLayout) -> Result<()> {
        layout.check_site(self.target_site)?;
        if self.local_action.local_dim() != layout.local_dim {
            return Err(Error::DimensionMismatch {
                state_dim: layout.local_dim as usize,
                expected: self.local_action.local_dim() as usize,
            });
        }
        Ok(())
    }

    pub fn dagger(&self) -> Self {
        Self {
            target_site: self.target_site,
            local_action: self.local_action.dagger(),
            constraint: self.constraint,
            prefactor: self.prefactor.conj(),
        }
    }

    /// `out += self · input`, both of length `layout.dim()`.
    pub(crate) fn accumulate(&self, layout: BasisLayout, input: &[C64], out: &mut [C64]) {
        let ld = layout.local_dim as usize;
        let stride = layout.stride(self.target_site);
        let site = self.target_site;
        for (ordinal, &a) in input.iter().enumerate() {
            if a == C64::ZERO {
                continue;
            }
            if !self.constraint.permits(ordinal, site, layout) {
                continue;
            }
            let from = layout.level(ordinal, site) as usize;
            let base = ordinal - from * stride;
            let scaled = self.prefactor * a;
            for to in 0..ld {
                let c = self.local_action.get(to, from);
                if c != C64::ZERO {
                    out[base + to * stride] += c * scaled;
                }
            }
        }
    }
}

/// Apply a constrained local operator to a state, returning a new state with
/// its squared norm recomputed. The input is untouched.
pub fn apply_local_operator(state: &PureState, op: &LocalOperator) -> Result<PureState> {
    let layout = state.layout();
    op.validate(layout)?;
    let mut out = vec![C64::ZERO; state.dim()];
    op.accumulate(layout, state.amplitudes(), &mut out);
    PureState::from_amplitudes(out, layout)
}

/// A jump channel: a sum of constrained local operators.
///
/// Every model in the zoo uses a single term per channel except the Rydberg
/// chain, whose J_k = x p_k - p_{k-1} σ_k⁻ p_{k+1} carries two.
#[derive(Clone, Debug)]
pub struct JumpOperator {
    terms: Vec<LocalOperator>,
}

impl JumpOperator {
    pub fn new(terms: Vec<LocalOperator>) -> Self {
        debug_assert!(!terms.is_empty());
        Self { terms }
    }

    pub fn single(term: LocalOperator) -> Self {
        Self { terms: vec![term] }
    }

    pub fn terms(&self) -> &[LocalOperator] {
        &self.terms
    }

    pub fn dagger(&self) -> Self {
        Self {
            terms: self.terms.iter().map(LocalOperator::dagger).collect(),
        }
    }

    pub fn validate(&self, layout: BasisLayout) -> Result<()> {
        self.terms.iter().try_for_each(|t| t.validate(layout))
    }

    /// `out += J · input`.
    pub(crate) fn accumulate(&self, layout: BasisLayout, input: &[C64], out: &mut [C64]) {
        for term in &self.terms {
            term.accumulate(layout, input, out);
        }
    }

    /// `out += J† · input`.
    pub(crate) fn accumulate_dagger(&self, layout: BasisLayout, input: &[C64], out: &mut [C64]) {
        for term in &self.terms {
            term.dagger().accumulate(layout, input, out);
        }
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        let layout = state.layout();
        self.validate(layout)?;
        let mut out = vec![C64::ZERO; state.dim()];
        self.accumulate(layout, state.amplitudes(), &mut out);
        PureState::from_amplitudes(out, layout)
    }

    /// Dense matrix of this channel (oracle scale only).
    pub fn dense(&self, layout: BasisLayout) -> Result<DMatrix<C64>> {
        dense_matrix_of(&self.terms, layout)
    }
}

/// Materialise a sum of constrained local operators as a dense matrix.
///
/// Built independently of the application kernel: Kronecker products of the
/// local action with identities, times the diagonal constraint projector.
/// Fails above [`ORACLE_CAP`].
pub fn dense_matrix_of(terms: &[LocalOperator], layout: BasisLayout) -> Result<DMatrix<C64>> {
    let dim = layout.dim();
    if dim > ORACLE_CAP {
        return Err(Error::OracleCapExceeded {
            size: dim,
            cap: ORACLE_CAP,
        });
    }
    let ld = layout.local_dim as usize;
    let mut total = DMatrix::<C64>::zeros(dim, dim);
    for term in terms {
        term.validate(layout)?;
        // kron runs from the most significant site down so that site 0 is the
        // least significant digit of the ordinal.
        let mut m = DMatrix::<C64>::identity(1, 1);
        for site in (0..layout.n_sites).rev() {
            let factor = if site == term.target_site {
                DMatrix::from_fn(ld, ld, |i, j| term.local_action.get(i, j))
            } else {
                DMatrix::identity(ld, ld)
            };
            m = m.kronecker(&factor);
        }
        for ordinal in 0..dim {
            if !term
                .constraint
                .permits(ordinal, term.target_site, layout)
            {
                // constraint projector annihilates this input column
                for row in 0..dim {
                    m[(row, ordinal)] = C64::ZERO;
                }
            }
        }
        total += m * term.prefactor;
    }
    Ok(total)
}

/// Hermitian, trace-one density matrix over the configuration basis
/// (oracle scale only).
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    layout: BasisLayout,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-10 max element) and unit trace (1e-10).
    pub fn new(matrix: DMatrix<C64>, layout: BasisLayout) -> Result<Self> {
        if matrix.nrows() != layout.dim() || matrix.ncols() != layout.dim() {
            return Err(Error::DimensionMismatch {
                state_dim: matrix.nrows(),
                expected: layout.dim(),
            });
        }
        let herm = hermiticity_error(&matrix);
        if herm > 1e-10 {
            return Err(Error::NotHermitian { deviation: herm });
        }
        let tr = matrix.diagonal().iter().sum::<C64>();
        if (tr - C64::ONE).norm() > 1e-10 {
            return Err(Error::InvalidSpec(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        Ok(Self { matrix, layout })
    }

    pub(crate) fn new_unchecked(matrix: DMatrix<C64>, layout: BasisLayout) -> Self {
        Self { matrix, layout }
    }

    pub fn from_pure(state: &PureState) -> Self {
        let dim = state.dim();
        let a = state.amplitudes();
        let norm = state.squared_norm();
        let matrix = DMatrix::from_fn(dim, dim, |i, j| a[i] * a[j].conj() / norm);
        Self {
            matrix,
            layout: state.layout(),
        }
    }

    /// The completely mixed state I/dim.
    pub fn maximally_mixed(layout: BasisLayout) -> Self {
        let dim = layout.dim();
        let matrix = DMatrix::from_diagonal_element(dim, dim, C64::new(1.0 / dim as f64, 0.0));
        Self { matrix, layout }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn layout(&self) -> BasisLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diagonal().iter().sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }

    /// Smallest eigenvalue (numerical PSD check).
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Diagonal expectation Tr[ρ O] for a configuration-diagonal observable.
    pub fn expectation_diagonal(&self, observable: impl Fn(&SpinConfiguration) -> f64) -> f64 {
        let mut scratch = SpinConfiguration::all_down(self.layout.n_sites, self.layout.local_dim);
        let mut acc = 0.0;
        for ordinal in 0..self.dim() {
            let w = self.matrix[(ordinal, ordinal)].re;
            scratch.decode_from(ordinal);
            acc += w * observable(&scratch);
        }
        acc
    }
}

pub(crate) fn hermiticity_error(m: &DMatrix<C64>) -> f64 {
    let mut max = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..=i {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > max {
                max = d;
            }
        }
    }
    max
}
