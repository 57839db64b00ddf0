//! Scheduling protocols as jump maps on the network-induced error `e`.
//!
//! Each protocol comes with the Lyapunov function `W(i, e)` of its induced
//! discrete-time system `e(i+1) = h(i, e(i))`, the contraction `σ` with
//! `W(i+1, h(i, e)) ≤ σ(W(i, e))`, and the sandwich bounds
//! `α̲(|e|) ≤ W(i, e) ≤ ᾱ(|e|)`.
//!
//! Round-robin counters are 1-based: node `k` (1-based) is scheduled at the
//! counter values `N·(k + jℓ)` for `j ≥ 0`, where `N = 1` for classic RR and
//! `N = ⌊1/sat(|e|)⌋` for modified RR. Counter 0 never transmits.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numerics::norm;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("error vector has dimension {found}, partition expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("node partition must have at least one node and no empty node")]
    EmptyPartition,
    #[error("round-robin Lyapunov sum did not reach zero within {cap} transmissions")]
    NoTermination { cap: usize },
    #[error("round-robin counter overflow (|e| = {norm:e})")]
    CounterOverflow { norm: f64 },
    #[error("unknown protocol `{0}` (expected tod, mtod, rr or mrr)")]
    UnknownKind(String),
}

/// Split of the error vector `e = (e₁, …, e_ℓ)` into per-node blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodePartition {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl NodePartition {
    pub fn new(dims: Vec<usize>) -> Result<Self, ProtocolError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(ProtocolError::EmptyPartition);
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for d in &dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(Self { dims, offsets })
    }

    /// `ℓ` scalar nodes.
    pub fn scalar_nodes(nodes: usize) -> Result<Self, ProtocolError> {
        Self::new(vec![1; nodes])
    }

    pub fn nodes(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn node_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn range(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn block<'a, T>(&self, e: &'a [T], node: usize) -> &'a [T] {
        &e[self.range(node)]
    }

    pub fn node_norms<T: Scalar>(&self, e: &[T]) -> Vec<T> {
        (0..self.nodes()).map(|k| norm(self.block(e, k))).collect()
    }

    pub(crate) fn check<T>(&self, e: &[T]) -> Result<(), ProtocolError> {
        if e.len() != self.total() {
            return Err(ProtocolError::Dimension { expected: self.total(), found: e.len() });
        }
        Ok(())
    }

    fn zero_node<T: Scalar>(&self, e: &mut [T], node: usize) {
        for v in &mut e[self.range(node)] {
            *v = T::zero();
        }
    }
}

#[inline]
fn sat<T: Scalar>(s: T) -> T {
    s.min(T::one())
}

/// `min(argmax_k |e_k|)`, 0-based.
pub fn tod_selected_node<T: Scalar>(e: &[T], partition: &NodePartition) -> usize {
    let norms = partition.node_norms(e);
    let mut best = 0;
    for (k, &n) in norms.iter().enumerate() {
        if n > norms[best] {
            best = k;
        }
    }
    best
}

/// Modified TOD: `(I − Ψ(e))e`, shrinking the selected block by `sat(|e_k|)`.
pub fn tod_modified_jump<T: Scalar>(e: &[T], partition: &NodePartition) -> Result<Vec<T>, ProtocolError> {
    partition.check(e)?;
    let k = tod_selected_node(e, partition);
    let psi = sat(norm(partition.block(e, k)));
    let mut out = e.to_vec();
    for v in &mut out[partition.range(k)] {
        *v = *v - psi * *v;
    }
    Ok(out)
}

/// Classic TOD: the selected block is zeroed.
pub fn tod_classic_jump<T: Scalar>(e: &[T], partition: &NodePartition) -> Result<Vec<T>, ProtocolError> {
    partition.check(e)?;
    let k = tod_selected_node(e, partition);
    let mut out = e.to_vec();
    partition.zero_node(&mut out, k);
    Ok(out)
}

/// Piecewise contraction of modified TOD for `W = |e|`.
pub fn sigma_tod<T: Scalar>(s: T, nodes: usize) -> T {
    let l = T::from_usize(nodes).unwrap();
    if s <= l.sqrt() {
        s * (T::one() - l.powf(lit(-1.5)) * s).max(T::zero()).sqrt()
    } else {
        ((l - T::one()) / l).sqrt() * s
    }
}

/// Piecewise contraction of modified RR for the forward-sum `W`.
pub fn sigma_rr<T: Scalar>(s: T, nodes: usize) -> T {
    let l = T::from_usize(nodes).unwrap();
    if s < lit::<T>(2.0) * (l * l * l).sqrt() {
        let l4 = l * l * l * l;
        s * (T::one() - s * s / (lit::<T>(4.0) * l4)).max(T::zero()).sqrt()
    } else {
        ((l - T::one()) / l).sqrt() * s
    }
}

/// Spacing `N` of the round-robin transmission grid, `None` when `N` would
/// exceed `limit` (no transmission can happen before that counter value).
fn rr_spacing<T: Scalar>(e_norm: T, modified: bool, limit: u64) -> Option<u64> {
    if !modified {
        return Some(1);
    }
    let n = (T::one() / sat(e_norm)).floor();
    if n > T::from_u64(limit).unwrap() {
        None
    } else {
        n.to_u64()
    }
}

/// Node (0-based) transmitting at counter `i`, if any.
pub fn rr_transmitting_node<T: Scalar>(i: u64, e: &[T], partition: &NodePartition, modified: bool) -> Option<usize> {
    if i == 0 {
        return None;
    }
    let e_norm = norm(e);
    if modified && e_norm == T::zero() {
        return None;
    }
    let spacing = rr_spacing(e_norm, modified, i)?;
    if !i.is_multiple_of(spacing) {
        return None;
    }
    let slot = i / spacing;
    Some(((slot - 1) % partition.nodes() as u64) as usize)
}

fn rr_jump<T: Scalar>(i: u64, e: &[T], partition: &NodePartition, modified: bool) -> Result<Vec<T>, ProtocolError> {
    partition.check(e)?;
    let mut out = e.to_vec();
    if let Some(k) = rr_transmitting_node(i, e, partition, modified) {
        partition.zero_node(&mut out, k);
    }
    Ok(out)
}

/// Modified RR: `(I − Δ(i, e))e`.
pub fn rr_modified_jump<T: Scalar>(i: u64, e: &[T], partition: &NodePartition) -> Result<Vec<T>, ProtocolError> {
    rr_jump(i, e, partition, true)
}

/// Classic RR: node `((i − 1) mod ℓ) + 1` is zeroed.
pub fn rr_classic_jump<T: Scalar>(i: u64, e: &[T], partition: &NodePartition) -> Result<Vec<T>, ProtocolError> {
    rr_jump(i, e, partition, false)
}

/// One transmission of the induced RR system: at `counter`, `node` was zeroed
/// after the error had stayed constant for `dwell` counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RrTransmission {
    pub counter: u64,
    pub node: usize,
}

/// Runs the induced discrete system from `(i, e)` until the error is zero.
///
/// Idle counters are skipped in one step: between transmissions the iterate
/// is constant, so each idle run contributes `count · |e|²` to `W²`. Returns
/// `W²` and the transmission schedule.
fn rr_forward_sum<T: Scalar>(
    i: u64,
    e: &[T],
    partition: &NodePartition,
    modified: bool,
) -> Result<(T, Vec<RrTransmission>), ProtocolError> {
    partition.check(e)?;
    let nodes = partition.nodes();
    let cap = 4 * nodes * nodes + 4;
    let mut cur = e.to_vec();
    let mut counter = i;
    let mut sum = T::zero();
    let mut schedule = Vec::new();
    loop {
        let e_norm = norm(&cur);
        if e_norm == T::zero() {
            return Ok((sum, schedule));
        }
        if schedule.len() >= cap {
            return Err(ProtocolError::NoTermination { cap });
        }
        let overflow = || ProtocolError::CounterOverflow { norm: e_norm.to_f64().unwrap_or(f64::NAN) };
        let spacing = rr_spacing(e_norm, modified, u64::MAX / 4).ok_or_else(overflow)?;
        let next =
            if counter == 0 { spacing } else { counter.div_ceil(spacing).checked_mul(spacing).ok_or_else(overflow)? };
        let count = next - counter + 1;
        sum = sum + T::from_u64(count).unwrap() * e_norm * e_norm;
        let node = ((next / spacing - 1) % nodes as u64) as usize;
        partition.zero_node(&mut cur, node);
        schedule.push(RrTransmission { counter: next, node });
        counter = next.checked_add(1).ok_or_else(overflow)?;
    }
}

/// `W(i, e) = sqrt(Σ_{k ≥ i} |φ(k, i, e)|²)` for modified RR.
pub fn rr_lyapunov<T: Scalar>(i: u64, e: &[T], partition: &NodePartition) -> Result<T, ProtocolError> {
    rr_forward_sum(i, e, partition, true).map(|(s, _)| s.sqrt())
}

/// Transmission schedule that determines `rr_lyapunov(i, ·)` near `e`.
///
/// Along a path on which the schedule does not change, `W²` is a fixed
/// positive combination of squared block norms and hence smooth.
pub fn rr_schedule<T: Scalar>(
    i: u64,
    e: &[T],
    partition: &NodePartition,
    modified: bool,
) -> Result<Vec<RrTransmission>, ProtocolError> {
    rr_forward_sum(i, e, partition, modified).map(|(_, s)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    ClassicTod,
    ModifiedTod,
    ClassicRr,
    ModifiedRr,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] =
        [ProtocolKind::ClassicTod, ProtocolKind::ModifiedTod, ProtocolKind::ClassicRr, ProtocolKind::ModifiedRr];

    pub fn is_tod(self) -> bool {
        matches!(self, ProtocolKind::ClassicTod | ProtocolKind::ModifiedTod)
    }

    pub fn is_modified(self) -> bool {
        matches!(self, ProtocolKind::ModifiedTod | ProtocolKind::ModifiedRr)
    }

    /// Command-line name: `tod`, `mtod`, `rr` or `mrr`.
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::ClassicTod => "tod",
            ProtocolKind::ModifiedTod => "mtod",
            ProtocolKind::ClassicRr => "rr",
            ProtocolKind::ModifiedRr => "mrr",
        }
    }

    /// Gain family name used in model files.
    pub fn family(self) -> &'static str {
        if self.is_tod() {
            "tod"
        } else {
            "rr"
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tod" => Ok(ProtocolKind::ClassicTod),
            "mtod" => Ok(ProtocolKind::ModifiedTod),
            "rr" => Ok(ProtocolKind::ClassicRr),
            "mrr" => Ok(ProtocolKind::ModifiedRr),
            other => Err(ProtocolError::UnknownKind(other.to_string())),
        }
    }
}

/// Contraction function `σ` paired with a protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigmaFunction {
    pub kind: ProtocolKind,
    pub nodes: usize,
}

impl SigmaFunction {
    pub fn eval<T: Scalar>(&self, s: T) -> T {
        match self.kind {
            ProtocolKind::ModifiedTod => sigma_tod(s, self.nodes),
            ProtocolKind::ModifiedRr => sigma_rr(s, self.nodes),
            ProtocolKind::ClassicTod | ProtocolKind::ClassicRr => {
                let l = T::from_usize(self.nodes).unwrap();
                ((l - T::one()) / l).sqrt() * s
            }
        }
    }
}

/// Class-K∞ bounds `(α̲_e, ᾱ_e)` on `W` in terms of `|e|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SandwichBounds {
    pub kind: ProtocolKind,
    pub nodes: usize,
}

impl SandwichBounds {
    pub fn lower<T: Scalar>(&self, s: T) -> T {
        s
    }

    pub fn upper<T: Scalar>(&self, s: T) -> T {
        let l = T::from_usize(self.nodes).unwrap();
        match self.kind {
            ProtocolKind::ClassicTod | ProtocolKind::ModifiedTod => s,
            ProtocolKind::ClassicRr => l.sqrt() * s,
            ProtocolKind::ModifiedRr => (l * (lit::<T>(2.0) * s).sqrt()).max(l.sqrt() * s),
        }
    }
}

/// `(α̲_e, ᾱ_e)` for `kind` on `nodes` nodes.
pub fn sandwich_bounds(kind: ProtocolKind, nodes: usize) -> SandwichBounds {
    SandwichBounds { kind, nodes }
}

/// A scheduling protocol on a fixed node partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub partition: NodePartition,
}

impl Protocol {
    pub fn new(kind: ProtocolKind, partition: NodePartition) -> Self {
        Self { kind, partition }
    }

    pub fn nodes(&self) -> usize {
        self.partition.nodes()
    }

    /// Jump map `h(κ, e)`.
    pub fn jump<T: Scalar>(&self, counter: u64, e: &[T]) -> Result<Vec<T>, ProtocolError> {
        match self.kind {
            ProtocolKind::ClassicTod => tod_classic_jump(e, &self.partition),
            ProtocolKind::ModifiedTod => tod_modified_jump(e, &self.partition),
            ProtocolKind::ClassicRr => rr_classic_jump(counter, e, &self.partition),
            ProtocolKind::ModifiedRr => rr_modified_jump(counter, e, &self.partition),
        }
    }

    /// Lyapunov function `W(κ, e)`. TOD uses the stationary `|e|`; RR uses the
    /// forward sum of squared iterates of its induced system.
    pub fn lyapunov<T: Scalar>(&self, counter: u64, e: &[T]) -> Result<T, ProtocolError> {
        match self.kind {
            ProtocolKind::ClassicTod | ProtocolKind::ModifiedTod => {
                self.partition.check(e)?;
                Ok(norm(e))
            }
            ProtocolKind::ClassicRr => rr_forward_sum(counter, e, &self.partition, false).map(|(s, _)| s.sqrt()),
            ProtocolKind::ModifiedRr => rr_lyapunov(counter, e, &self.partition),
        }
    }

    /// Discrete data that `W(κ, ·)` depends on besides the block norms; empty
    /// for TOD.
    pub fn lyapunov_schedule<T: Scalar>(&self, counter: u64, e: &[T]) -> Result<Vec<RrTransmission>, ProtocolError> {
        match self.kind {
            ProtocolKind::ClassicTod | ProtocolKind::ModifiedTod => Ok(Vec::new()),
            ProtocolKind::ClassicRr => rr_schedule(counter, e, &self.partition, false),
            ProtocolKind::ModifiedRr => rr_schedule(counter, e, &self.partition, true),
        }
    }

    pub fn sigma(&self) -> SigmaFunction {
        SigmaFunction { kind: self.kind, nodes: self.nodes() }
    }

    pub fn bounds(&self) -> SandwichBounds {
        sandwich_bounds(self.kind, self.nodes())
    }
}
