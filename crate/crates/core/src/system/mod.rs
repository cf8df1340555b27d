//! The inductive system `C_n = C(X_n × ℤ_{2^n}, M_{r(n)})` with
//! `X_n = (S²)^{s(n)}`, its connecting maps, and formal projection classes.
//!
//! A single-level connecting map `Γ_{n+1,n}` is the ordered list of its
//! `l(n+1)` diagonal slots (eigenvalue maps). Slot lists are run-length
//! encoded because `d(n+1)` routinely reaches 10^9. Composite maps are
//! lexicographic products of single-level lists with the first level
//! outermost, matching `M_{r(m)} ≅ M_{l(1)} ⊗ … ⊗ M_{l(m)}`.

pub mod density;

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{self, ratio_of, Rational};
use crate::schedule::{DerivedSequences, ScheduleError};

/// Stages whose component count `2^n` we are willing to enumerate.
pub const MAX_ENUMERATED_STAGE: usize = 20;
/// Upper bound on line runs or paths materialized by a single operation.
pub const MATERIALIZE_LIMIT: u64 = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SystemError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("stage mismatch: expected {expected}, found {found}")]
    StageMismatch { expected: usize, found: usize },
    #[error("malformed connecting map: {0}")]
    MalformedMap(String),
    #[error("malformed projection class: {0}")]
    MalformedClass(String),
    #[error("too large to enumerate: {0}")]
    TooLarge(String),
}

/// One diagonal slot `S_{n,j}` of `Γ_{n+1,n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum EigenvalueMap {
    /// `(x, k) ↦ (P_block(x), k mod 2^n)`; blocks are 1-based.
    CoordProj { block: u64 },
    /// `(x, k) ↦ (x_stage, element)`.
    PointEval { stage: usize, element: u64 },
}

impl fmt::Display for EigenvalueMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EigenvalueMap::CoordProj { block } => write!(f, "P{block}"),
            EigenvalueMap::PointEval { stage, element } => write!(f, "ev(x{stage}, {element})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "run", rename_all = "snake_case")]
pub enum SlotRun {
    /// Consecutive slots `CoordProj(first), …, CoordProj(first + count - 1)`.
    Blocks { first: u64, count: u64 },
    Point { stage: usize, element: u64 },
}

impl SlotRun {
    fn len(&self) -> u64 {
        match self {
            SlotRun::Blocks { count, .. } => *count,
            SlotRun::Point { .. } => 1,
        }
    }

    fn get(&self, offset: u64) -> EigenvalueMap {
        match *self {
            SlotRun::Blocks { first, .. } => EigenvalueMap::CoordProj {
                block: first + offset,
            },
            SlotRun::Point { stage, element } => EigenvalueMap::PointEval { stage, element },
        }
    }

    fn single(map: EigenvalueMap) -> SlotRun {
        match map {
            EigenvalueMap::CoordProj { block } => SlotRun::Blocks {
                first: block,
                count: 1,
            },
            EigenvalueMap::PointEval { stage, element } => SlotRun::Point { stage, element },
        }
    }
}

/// Ordered slots of one level `Γ_{n+1,n}`; indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotList {
    runs: Vec<SlotRun>,
}

impl SlotList {
    /// `d(n+1)` coordinate projections followed by the `2^n` point
    /// evaluations `(x_n, 0), …, (x_n, 2^n − 1)`.
    pub fn canonical(seq: &DerivedSequences, n: usize) -> Result<Self, SystemError> {
        seq.require_stage(n + 1)?;
        check_enumerable(n)?;
        let blocks = seq.d(n + 1).to_u64().ok_or_else(|| {
            SystemError::TooLarge(format!("d({}) does not fit in 64 bits", n + 1))
        })?;
        let mut runs = vec![SlotRun::Blocks {
            first: 1,
            count: blocks,
        }];
        runs.extend((0..1u64 << n).map(|element| SlotRun::Point { stage: n, element }));
        Ok(SlotList { runs })
    }

    pub fn from_slots(slots: impl IntoIterator<Item = EigenvalueMap>) -> Self {
        let mut list = SlotList { runs: Vec::new() };
        for s in slots {
            list.push(SlotRun::single(s));
        }
        list
    }

    fn push(&mut self, run: SlotRun) {
        if run.len() == 0 {
            return;
        }
        if let (
            Some(SlotRun::Blocks { first, count }),
            SlotRun::Blocks {
                first: next,
                count: more,
            },
        ) = (self.runs.last_mut(), run)
        {
            if *first + *count == next {
                *count += more;
                return;
            }
        }
        self.runs.push(run);
    }

    pub fn runs(&self) -> &[SlotRun] {
        &self.runs
    }

    pub fn len(&self) -> u64 {
        self.runs.iter().map(SlotRun::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn get(&self, index: u64) -> Option<EigenvalueMap> {
        let mut offset = index;
        for run in &self.runs {
            if offset < run.len() {
                return Some(run.get(offset));
            }
            offset -= run.len();
        }
        None
    }

    /// Expands every slot; callers should check `len()` first.
    pub fn iter(&self) -> impl Iterator<Item = EigenvalueMap> + '_ {
        self.runs
            .iter()
            .flat_map(|run| (0..run.len()).map(move |i| run.get(i)))
    }

    /// Replaces slot `index`, splitting runs as needed.
    pub fn set(&mut self, index: u64, map: EigenvalueMap) -> Result<(), SystemError> {
        if index >= self.len() {
            return Err(SystemError::MalformedMap(format!(
                "slot {index} out of range for {} slots",
                self.len()
            )));
        }
        let old = std::mem::take(&mut self.runs);
        let mut offset = index;
        let mut replaced = false;
        for run in old {
            if replaced || offset >= run.len() {
                if !replaced {
                    offset -= run.len();
                }
                self.push(run);
                continue;
            }
            match run {
                SlotRun::Blocks { first, count } => {
                    self.push(SlotRun::Blocks {
                        first,
                        count: offset,
                    });
                    self.push(SlotRun::single(map));
                    self.push(SlotRun::Blocks {
                        first: first + offset + 1,
                        count: count - offset - 1,
                    });
                }
                SlotRun::Point { .. } => self.push(SlotRun::single(map)),
            }
            replaced = true;
        }
        self.renormalize();
        Ok(())
    }

    pub fn swap(&mut self, a: u64, b: u64) -> Result<(), SystemError> {
        let (Some(sa), Some(sb)) = (self.get(a), self.get(b)) else {
            return Err(SystemError::MalformedMap(format!(
                "swap indices {a}, {b} out of range"
            )));
        };
        self.set(a, sb)?;
        self.set(b, sa)
    }

    fn renormalize(&mut self) {
        let old = std::mem::take(&mut self.runs);
        for run in old {
            self.push(run);
        }
    }
}

/// `Γ_{to,from}` as the ordered product of its single-level slot lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectingMap {
    pub from_stage: usize,
    pub to_stage: usize,
    levels: Vec<SlotList>,
}

impl ConnectingMap {
    pub fn identity(stage: usize) -> Self {
        ConnectingMap {
            from_stage: stage,
            to_stage: stage,
            levels: Vec::new(),
        }
    }

    /// A single-level map from an arbitrary (possibly mutated) slot list.
    pub fn from_level(from_stage: usize, level: SlotList) -> Self {
        ConnectingMap {
            from_stage,
            to_stage: from_stage + 1,
            levels: vec![level],
        }
    }

    /// `levels()[i]` maps stage `from_stage + i` to `from_stage + i + 1`.
    pub fn levels(&self) -> &[SlotList] {
        &self.levels
    }

    pub fn path_count(&self) -> BigUint {
        self.levels.iter().map(|l| BigUint::from(l.len())).product()
    }

    /// Path `index` in lexicographic order (last level varies fastest).
    pub fn path(&self, index: &BigUint) -> Option<Vec<EigenvalueMap>> {
        if *index >= self.path_count() {
            return None;
        }
        let mut rest = index.clone();
        let mut out = vec![EigenvalueMap::CoordProj { block: 0 }; self.levels.len()];
        for (slot, level) in out.iter_mut().zip(&self.levels).rev() {
            let (q, r) = rest.div_rem(&BigUint::from(level.len()));
            *slot = level.get(r.to_u64()?)?;
            rest = q;
        }
        Some(out)
    }

    /// Every path in order; refuses above [`MATERIALIZE_LIMIT`].
    pub fn paths(&self) -> Result<Vec<Vec<EigenvalueMap>>, SystemError> {
        let count = self.path_count();
        if count > BigUint::from(MATERIALIZE_LIMIT) {
            return Err(SystemError::TooLarge(format!("{count} paths")));
        }
        let mut out: Vec<Vec<EigenvalueMap>> = vec![Vec::new()];
        for level in &self.levels {
            let slots: Vec<EigenvalueMap> = level.iter().collect();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    slots.iter().map(move |s| {
                        let mut p = prefix.clone();
                        p.push(*s);
                        p
                    })
                })
                .collect();
        }
        Ok(out)
    }

    /// Slot list of the `i`-th elementary level, outermost first.
    pub fn level(&self, i: usize) -> Option<&SlotList> {
        self.levels.get(i)
    }
}

/// The stage-`n` to stage-`n+1` map with the prescribed slot layout.
pub fn connecting_map(seq: &DerivedSequences, n: usize) -> Result<ConnectingMap, SystemError> {
    Ok(ConnectingMap::from_level(n, SlotList::canonical(seq, n)?))
}

/// `Γ_{m,n}` for `n ≤ m`; `Γ_{n,n}` is the identity.
pub fn connecting_map_between(
    seq: &DerivedSequences,
    n: usize,
    m: usize,
) -> Result<ConnectingMap, SystemError> {
    if m < n {
        return Err(SystemError::StageMismatch {
            expected: n,
            found: m,
        });
    }
    (n..m).try_fold(ConnectingMap::identity(n), |acc, j| {
        compose(&acc, &connecting_map(seq, j)?)
    })
}

/// `first: n → p` followed by `second: p → m`.
pub fn compose(first: &ConnectingMap, second: &ConnectingMap) -> Result<ConnectingMap, SystemError> {
    if first.to_stage != second.from_stage {
        return Err(SystemError::StageMismatch {
            expected: first.to_stage,
            found: second.from_stage,
        });
    }
    let mut levels = first.levels.clone();
    levels.extend(second.levels.iter().cloned());
    Ok(ConnectingMap {
        from_stage: first.from_stage,
        to_stage: second.to_stage,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageAlgebra {
    pub n: usize,
    #[serde(with = "exact::serde_biguint")]
    pub matrix_size: BigUint,
    /// Number of sphere factors of the base space.
    #[serde(with = "exact::serde_biguint")]
    pub sphere_factors: BigUint,
    #[serde(with = "exact::serde_biguint")]
    pub group_order: BigUint,
}

impl StageAlgebra {
    pub fn new(seq: &DerivedSequences, n: usize) -> Result<Self, SystemError> {
        seq.require_stage(n)?;
        Ok(StageAlgebra {
            n,
            matrix_size: seq.r(n).clone(),
            sphere_factors: seq.s(n).clone(),
            group_order: exact::pow2(n),
        })
    }
}

impl fmt::Display for StageAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C((S^2)^{} x Z_{}, M_{})",
            self.sphere_factors, self.group_order, self.matrix_size
        )
    }
}

/// Pullbacks of the tautological line bundle along coordinates
/// `start, …, start + len − 1` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineRun {
    #[serde(with = "exact::serde_biguint")]
    pub start: BigUint,
    #[serde(with = "exact::serde_biguint")]
    pub len: BigUint,
}

impl LineRun {
    pub fn new(start: impl Into<BigUint>, len: impl Into<BigUint>) -> Self {
        LineRun {
            start: start.into(),
            len: len.into(),
        }
    }

    fn end(&self) -> BigUint {
        &self.start + &self.len
    }
}

/// K-class of a projection on one connected component: a multiset of
/// line-bundle atoms plus a trivial summand.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComponentClass {
    lines: Vec<LineRun>,
    #[serde(with = "exact::serde_biguint")]
    pub trivial: BigUint,
}

impl ComponentClass {
    pub fn new(lines: Vec<LineRun>, trivial: BigUint) -> Self {
        ComponentClass {
            lines: normalize_lines(lines),
            trivial,
        }
    }

    pub fn trivial(rank: BigUint) -> Self {
        ComponentClass {
            lines: Vec::new(),
            trivial: rank,
        }
    }

    pub fn lines(&self) -> &[LineRun] {
        &self.lines
    }

    pub fn line_count(&self) -> BigUint {
        self.lines.iter().map(|r| r.len.clone()).sum()
    }

    pub fn rank(&self) -> BigUint {
        self.line_count() + &self.trivial
    }

    /// No coordinate carries two line atoms.
    pub fn lines_distinct(&self) -> bool {
        self.lines
            .windows(2)
            .all(|w| w[0].end() <= w[1].start)
    }

    fn sum(&self, other: &ComponentClass) -> ComponentClass {
        let mut lines = self.lines.clone();
        lines.extend(other.lines.iter().cloned());
        ComponentClass::new(lines, &self.trivial + &other.trivial)
    }
}

/// Canonical form of a multiset of coordinate runs: the coverage count is
/// split into layers (coordinates covered at least h times), each written
/// as maximal disjoint runs, then all runs sorted.
fn normalize_lines(lines: Vec<LineRun>) -> Vec<LineRun> {
    let lines: Vec<LineRun> = lines.into_iter().filter(|r| !r.len.is_zero()).collect();
    if lines.len() <= 1 {
        return lines;
    }
    let mut events: Vec<(BigUint, i64)> = Vec::with_capacity(lines.len() * 2);
    for r in &lines {
        events.push((r.start.clone(), 1));
        events.push((r.end(), -1));
    }
    events.sort();
    // Segments [a, b) of constant positive coverage.
    let mut segments: Vec<(BigUint, BigUint, i64)> = Vec::new();
    let mut depth = 0i64;
    let mut i = 0;
    while i < events.len() {
        let at = events[i].0.clone();
        while i < events.len() && events[i].0 == at {
            depth += events[i].1;
            i += 1;
        }
        if i < events.len() && depth > 0 {
            segments.push((at, events[i].0.clone(), depth));
        }
    }
    let max_depth = segments.iter().map(|s| s.2).max().unwrap_or(0);
    let mut out = Vec::new();
    for h in 1..=max_depth {
        let mut current: Option<(BigUint, BigUint)> = None;
        for (a, b, c) in &segments {
            if *c >= h {
                current = match current {
                    Some((s, e)) if e == *a => Some((s, b.clone())),
                    Some((s, e)) => {
                        out.push(LineRun {
                            len: &e - &s,
                            start: s,
                        });
                        Some((a.clone(), b.clone()))
                    }
                    None => Some((a.clone(), b.clone())),
                };
            }
        }
        if let Some((s, e)) = current {
            out.push(LineRun {
                len: &e - &s,
                start: s,
            });
        }
    }
    out.sort();
    out
}

/// Formal class of a projection in `M_∞(C_stage)`, one entry per element of
/// `ℤ_{2^stage}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionClass {
    pub stage: usize,
    components: Vec<ComponentClass>,
}

impl ProjectionClass {
    pub fn new(stage: usize, components: Vec<ComponentClass>) -> Result<Self, SystemError> {
        check_enumerable(stage)?;
        if components.len() != 1 << stage {
            return Err(SystemError::MalformedClass(format!(
                "stage {stage} needs {} components, got {}",
                1u64 << stage,
                components.len()
            )));
        }
        Ok(ProjectionClass { stage, components })
    }

    /// The Bott projection `b` over `X_0 = S²`: one line atom on coordinate 1.
    pub fn bott() -> Self {
        ProjectionClass {
            stage: 0,
            components: vec![ComponentClass::new(
                vec![LineRun::new(1u32, 1u32)],
                BigUint::zero(),
            )],
        }
    }

    pub fn trivial(stage: usize, rank: impl Into<BigUint>) -> Result<Self, SystemError> {
        check_enumerable(stage)?;
        let rank = rank.into();
        Ok(ProjectionClass {
            stage,
            components: vec![ComponentClass::trivial(rank); 1 << stage],
        })
    }

    pub fn zero(stage: usize) -> Result<Self, SystemError> {
        Self::trivial(stage, 0u32)
    }

    pub fn components(&self) -> &[ComponentClass] {
        &self.components
    }

    pub fn component(&self, k: u64) -> Option<&ComponentClass> {
        self.components.get(k as usize)
    }

    /// The common rank of every component.
    pub fn rank(&self) -> Result<BigUint, SystemError> {
        let first = self.components[0].rank();
        if let Some((k, c)) = self
            .components
            .iter()
            .enumerate()
            .find(|(_, c)| c.rank() != first)
        {
            return Err(SystemError::MalformedClass(format!(
                "component 0 has rank {first} but component {k} has rank {}",
                c.rank()
            )));
        }
        Ok(first)
    }

    pub fn is_component_uniform(&self) -> bool {
        self.components.windows(2).all(|w| w[0] == w[1])
    }

    pub fn direct_sum(&self, other: &ProjectionClass) -> Result<ProjectionClass, SystemError> {
        if self.stage != other.stage {
            return Err(SystemError::StageMismatch {
                expected: self.stage,
                found: other.stage,
            });
        }
        Ok(ProjectionClass {
            stage: self.stage,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.sum(b))
                .collect(),
        })
    }
}

fn check_enumerable(stage: usize) -> Result<(), SystemError> {
    if stage > MAX_ENUMERATED_STAGE {
        return Err(SystemError::TooLarge(format!(
            "stage {stage} has 2^{stage} components (limit 2^{MAX_ENUMERATED_STAGE})"
        )));
    }
    Ok(())
}

/// Lines of `source` pulled back into blocks `first .. first + count` of the
/// next stage, where each block holds `block_size` coordinates.
fn expand_blocks(
    source: &[LineRun],
    first: u64,
    count: u64,
    block_size: &BigUint,
    out: &mut Vec<LineRun>,
) -> Result<(), SystemError> {
    if count == 0 {
        return Ok(());
    }
    let offset = |b: u64| BigUint::from(b - 1) * block_size;
    let full = source
        .iter()
        .all(|r| r.start.is_one() && r.len == *block_size);
    if full {
        // Each full layer stays one contiguous run across the blocks.
        for _ in source {
            out.push(LineRun {
                start: offset(first) + 1u32,
                len: BigUint::from(count) * block_size,
            });
        }
        return Ok(());
    }
    let produced = (source.len() as u64).saturating_mul(count);
    if produced > MATERIALIZE_LIMIT {
        return Err(SystemError::TooLarge(format!(
            "{produced} line runs from a {count}-block pullback"
        )));
    }
    for b in first..first + count {
        let shift = offset(b);
        for r in source {
            out.push(LineRun {
                start: &r.start + &shift,
                len: r.len.clone(),
            });
        }
    }
    Ok(())
}

/// Pushes `class` through one level `Γ_{n+1,n}` given by `level`.
fn push_level(
    class: &ProjectionClass,
    level: &SlotList,
    seq: &DerivedSequences,
) -> Result<ProjectionClass, SystemError> {
    let n = class.stage;
    seq.require_stage(n + 1)?;
    check_enumerable(n + 1)?;
    let block_size = seq.s(n);
    let source_count = 1u64 << n;
    let ranks: Vec<BigUint> = class.components.iter().map(ComponentClass::rank).collect();

    let mut components = Vec::with_capacity(1 << (n + 1));
    for target in 0..(1u64 << (n + 1)) {
        let src = &class.components[(target % source_count) as usize];
        let mut lines = Vec::new();
        let mut trivial = BigUint::zero();
        for run in level.runs() {
            match *run {
                SlotRun::Blocks { first, count } => {
                    if first == 0 || BigUint::from(first + count - 1) > *seq.d(n + 1) {
                        return Err(SystemError::MalformedMap(format!(
                            "coordinate block {first}..{} outside 1..{}",
                            first + count - 1,
                            seq.d(n + 1)
                        )));
                    }
                    expand_blocks(&src.lines, first, count, block_size, &mut lines)?;
                    trivial += &src.trivial * count;
                }
                SlotRun::Point { stage, element } => {
                    if stage != n || element >= source_count {
                        return Err(SystemError::MalformedMap(format!(
                            "point evaluation (x{stage}, {element}) does not land in stage {n}"
                        )));
                    }
                    trivial += &ranks[element as usize];
                }
            }
        }
        components.push(ComponentClass::new(lines, trivial));
    }
    Ok(ProjectionClass {
        stage: n + 1,
        components,
    })
}

/// Propagates a class along `map`, level by level.
///
/// A coordinate projection re-indexes line atoms into its block and reads
/// the source at `k mod 2^n`; a point evaluation reads the source at its
/// evaluation component and contributes a trivial bundle of the same rank.
pub fn push_class(
    class: &ProjectionClass,
    map: &ConnectingMap,
    seq: &DerivedSequences,
) -> Result<ProjectionClass, SystemError> {
    if class.stage != map.from_stage {
        return Err(SystemError::StageMismatch {
            expected: map.from_stage,
            found: class.stage,
        });
    }
    map.levels
        .iter()
        .try_fold(class.clone(), |acc, level| push_level(&acc, level, seq))
}

/// Same result as [`push_class`], computed independently by following every
/// composite path from the target component back to the source stage.
pub fn push_class_pathwise(
    class: &ProjectionClass,
    map: &ConnectingMap,
    seq: &DerivedSequences,
) -> Result<ProjectionClass, SystemError> {
    if class.stage != map.from_stage {
        return Err(SystemError::StageMismatch {
            expected: map.from_stage,
            found: class.stage,
        });
    }
    let n = map.from_stage;
    let m = map.to_stage;
    seq.require_stage(m)?;
    check_enumerable(m)?;
    let paths = map.paths()?;
    let ranks: Vec<BigUint> = class.components.iter().map(ComponentClass::rank).collect();

    let mut components = Vec::with_capacity(1 << m);
    for target in 0..(1u64 << m) {
        let mut lines = Vec::new();
        let mut trivial = BigUint::zero();
        for path in &paths {
            // Walk from stage m down to stage n.
            let mut component = target;
            let mut offset = BigUint::zero();
            let mut constant = false;
            for (i, slot) in path.iter().enumerate().rev() {
                let lower = n + i;
                match *slot {
                    EigenvalueMap::CoordProj { block } => {
                        component %= 1u64 << lower;
                        if !constant {
                            offset += BigUint::from(block - 1) * seq.s(lower);
                        }
                    }
                    EigenvalueMap::PointEval { stage, element } => {
                        if stage != lower || element >= 1u64 << lower {
                            return Err(SystemError::MalformedMap(format!(
                                "point evaluation (x{stage}, {element}) at level {lower}"
                            )));
                        }
                        component = element;
                        constant = true;
                    }
                }
            }
            let src = &class.components[component as usize];
            if constant {
                trivial += &ranks[component as usize];
            } else {
                lines.extend(src.lines.iter().map(|r| LineRun {
                    start: &r.start + &offset,
                    len: r.len.clone(),
                }));
                trivial += &src.trivial;
            }
        }
        components.push(ComponentClass::new(lines, trivial));
    }
    Ok(ProjectionClass {
        stage: m,
        components,
    })
}

/// `b_m = Γ_{m,0}(b)`.
pub fn bott_class(seq: &DerivedSequences, m: usize) -> Result<ProjectionClass, SystemError> {
    push_class(
        &ProjectionClass::bott(),
        &connecting_map_between(seq, 0, m)?,
        seq,
    )
}

/// Normalized trace `rank / r(stage)`; equals `d_τ` on projections.
pub fn trace_of_class(class: &ProjectionClass, seq: &DerivedSequences) -> Result<Rational, SystemError> {
    seq.require_stage(class.stage)?;
    Ok(ratio_of(&class.rank()?, seq.r(class.stage)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BottDecomposition {
    pub stage: usize,
    pub components_checked: u64,
    #[serde(with = "exact::serde_biguint")]
    pub line_atoms: BigUint,
    #[serde(with = "exact::serde_biguint")]
    pub trivial_rank: BigUint,
    pub distinct_coordinates: bool,
    pub covers_all_coordinates: bool,
    pub component_uniform: bool,
    /// `s(m)` distinct line atoms on coordinates `1..s(m)` plus trivial
    /// rank `r(m) − s(m)`, in every component.
    pub matches_expected: bool,
}

pub fn bott_decomposition(
    class: &ProjectionClass,
    seq: &DerivedSequences,
) -> Result<BottDecomposition, SystemError> {
    let m = class.stage;
    seq.require_stage(m)?;
    let s = seq.s(m);
    let expected_trivial = seq.r(m) - s;
    let full = [LineRun {
        start: BigUint::one(),
        len: s.clone(),
    }];
    let mut distinct = true;
    let mut covers = true;
    let mut counts_ok = true;
    for c in &class.components {
        distinct &= c.lines_distinct();
        covers &= c.lines == full;
        counts_ok &= c.line_count() == *s && c.trivial == expected_trivial;
    }
    let first = &class.components[0];
    Ok(BottDecomposition {
        stage: m,
        components_checked: class.components.len() as u64,
        line_atoms: first.line_count(),
        trivial_rank: first.trivial.clone(),
        distinct_coordinates: distinct,
        covers_all_coordinates: covers,
        component_uniform: class.is_component_uniform(),
        matches_expected: distinct && covers && counts_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::schedule::{derive_sequences, ParameterSchedule};
    use proptest::prelude::*;

    fn tiny() -> DerivedSequences {
        derive_sequences(&ParameterSchedule::explicit([2, 3, 5]), 3).unwrap()
    }

    fn cp(block: u64) -> EigenvalueMap {
        EigenvalueMap::CoordProj { block }
    }

    fn pe(stage: usize, element: u64) -> EigenvalueMap {
        EigenvalueMap::PointEval { stage, element }
    }

    #[test]
    fn stage_zero_layout() {
        let map = connecting_map(&tiny(), 0).unwrap();
        let slots: Vec<_> = map.levels()[0].iter().collect();
        assert_eq!(slots, vec![cp(1), cp(2), pe(0, 0)]);
    }

    #[test]
    fn stage_one_layout() {
        let map = connecting_map(&tiny(), 1).unwrap();
        let slots: Vec<_> = map.levels()[0].iter().collect();
        assert_eq!(slots, vec![cp(1), cp(2), cp(3), pe(1, 0), pe(1, 1)]);
    }

    #[test]
    fn stage_two_layout() {
        let map = connecting_map(&tiny(), 2).unwrap();
        let slots: Vec<_> = map.levels()[0].iter().collect();
        assert_eq!(slots.len(), 9);
        assert_eq!(&slots[5..], &[pe(2, 0), pe(2, 1), pe(2, 2), pe(2, 3)]);
        assert!(connecting_map(&tiny(), 3).is_err());
    }

    #[test]
    fn large_levels_stay_compressed() {
        let seq = derive_sequences(&ParameterSchedule::powers_of_ten(), 9).unwrap();
        let level = SlotList::canonical(&seq, 8).unwrap();
        assert_eq!(level.len(), 1_000_000_000 + 256);
        assert_eq!(level.runs().len(), 257);
        assert_eq!(level.get(999_999_999), Some(cp(1_000_000_000)));
        assert_eq!(level.get(1_000_000_000), Some(pe(8, 0)));
    }

    #[test]
    fn composition_counts() {
        let seq = tiny();
        let g10 = connecting_map(&seq, 0).unwrap();
        let g21 = connecting_map(&seq, 1).unwrap();
        let g20 = compose(&g10, &g21).unwrap();
        assert_eq!(g20.path_count(), BigUint::from(15u32));
        assert_eq!(compose(&ConnectingMap::identity(0), &g10).unwrap(), g10);
        assert_eq!(compose(&g10, &ConnectingMap::identity(1)).unwrap(), g10);
        let g30 = connecting_map_between(&seq, 0, 3).unwrap();
        assert_eq!(g30.path_count(), *seq.r(3));
        assert!(matches!(
            compose(&g21, &g10),
            Err(SystemError::StageMismatch { .. })
        ));
        // lexicographic: last level fastest
        assert_eq!(g20.path(&BigUint::from(0u32)), Some(vec![cp(1), cp(1)]));
        assert_eq!(g20.path(&BigUint::from(4u32)), Some(vec![cp(1), pe(1, 1)]));
        assert_eq!(g20.path(&BigUint::from(5u32)), Some(vec![cp(2), cp(1)]));
        assert_eq!(g20.path(&BigUint::from(15u32)), None);
        assert_eq!(g20.paths().unwrap()[14], vec![pe(0, 0), pe(1, 1)]);
    }

    #[test]
    fn slot_list_editing() {
        let seq = tiny();
        let mut level = SlotList::canonical(&seq, 1).unwrap();
        level.set(1, pe(1, 1)).unwrap();
        let slots: Vec<_> = level.iter().collect();
        assert_eq!(slots, vec![cp(1), pe(1, 1), cp(3), pe(1, 0), pe(1, 1)]);
        level.set(1, cp(2)).unwrap();
        assert_eq!(level, SlotList::canonical(&seq, 1).unwrap());
        level.swap(3, 4).unwrap();
        assert_eq!(level.get(3), Some(pe(1, 1)));
        assert!(level.set(5, cp(1)).is_err());
        assert_eq!(
            SlotList::from_slots([cp(1), cp(2), cp(3), pe(1, 0), pe(1, 1)]),
            SlotList::canonical(&seq, 1).unwrap()
        );
    }

    #[test]
    fn bott_to_stage_one() {
        let seq = tiny();
        let b1 = bott_class(&seq, 1).unwrap();
        for c in b1.components() {
            assert_eq!(c.lines(), &[LineRun::new(1u32, 2u32)]);
            assert_eq!(c.trivial, BigUint::one());
        }
        assert_eq!(b1.rank().unwrap(), BigUint::from(3u32));
    }

    #[test]
    fn bott_to_stage_two() {
        let seq = tiny();
        let b2 = bott_class(&seq, 2).unwrap();
        let dec = bott_decomposition(&b2, &seq).unwrap();
        assert_eq!(dec.line_atoms, BigUint::from(6u32));
        assert_eq!(dec.trivial_rank, BigUint::from(9u32));
        assert!(dec.matches_expected);
        assert_eq!(dec.components_checked, 4);
    }

    #[test]
    fn trivial_class_scales_rank() {
        let seq = tiny();
        let e = ProjectionClass::trivial(1, 7u32).unwrap();
        let pushed = push_class(&e, &connecting_map_between(&seq, 1, 3).unwrap(), &seq).unwrap();
        assert_eq!(pushed.rank().unwrap(), BigUint::from(7u32 * 45));
        assert_eq!(trace_of_class(&pushed, &seq).unwrap(), rat(7, 3));
    }

    #[test]
    fn traces() {
        let seq = tiny();
        for m in 0..=3 {
            assert_eq!(trace_of_class(&bott_class(&seq, m).unwrap(), &seq).unwrap(), rat(1, 1));
        }
        assert_eq!(
            trace_of_class(&ProjectionClass::zero(2).unwrap(), &seq).unwrap(),
            rat(0, 1)
        );
        let lopsided = ProjectionClass::new(
            1,
            vec![
                ComponentClass::trivial(BigUint::one()),
                ComponentClass::trivial(BigUint::from(2u32)),
            ],
        )
        .unwrap();
        assert!(matches!(
            trace_of_class(&lopsided, &seq),
            Err(SystemError::MalformedClass(_))
        ));
    }

    #[test]
    fn pathwise_matches_levelwise() {
        let seq = tiny();
        let start = ProjectionClass::bott()
            .direct_sum(&ProjectionClass::trivial(0, 2u32).unwrap())
            .unwrap();
        for m in 0..=3 {
            let map = connecting_map_between(&seq, 0, m).unwrap();
            assert_eq!(
                push_class(&start, &map, &seq).unwrap(),
                push_class_pathwise(&start, &map, &seq).unwrap(),
                "m={m}"
            );
        }
    }

    #[test]
    fn doubled_bott_keeps_two_layers() {
        let seq = tiny();
        let bb = ProjectionClass::bott().direct_sum(&ProjectionClass::bott()).unwrap();
        let pushed = push_class(&bb, &connecting_map_between(&seq, 0, 2).unwrap(), &seq).unwrap();
        let c = &pushed.components()[0];
        assert_eq!(c.lines(), &[LineRun::new(1u32, 6u32), LineRun::new(1u32, 6u32)]);
        assert!(!c.lines_distinct());
        assert!(!bott_decomposition(&pushed, &seq).unwrap().matches_expected);
    }

    #[test]
    fn normalization_is_order_free() {
        let a = normalize_lines(vec![
            LineRun::new(1u32, 1u32),
            LineRun::new(1u32, 1u32),
            LineRun::new(2u32, 1u32),
            LineRun::new(2u32, 1u32),
        ]);
        assert_eq!(a, vec![LineRun::new(1u32, 2u32), LineRun::new(1u32, 2u32)]);
        let b = normalize_lines(vec![LineRun::new(3u32, 2u32), LineRun::new(1u32, 2u32)]);
        assert_eq!(b, vec![LineRun::new(1u32, 4u32)]);
        let c = normalize_lines(vec![LineRun::new(1u32, 3u32), LineRun::new(2u32, 3u32)]);
        assert_eq!(c, vec![LineRun::new(1u32, 4u32), LineRun::new(2u32, 2u32)]);
    }

    #[test]
    fn malformed_maps_rejected() {
        let seq = tiny();
        let bad_point = ConnectingMap::from_level(0, SlotList::from_slots([cp(1), cp(2), pe(0, 1)]));
        assert!(push_class(&ProjectionClass::bott(), &bad_point, &seq).is_err());
        let bad_block = ConnectingMap::from_level(0, SlotList::from_slots([cp(1), cp(3), pe(0, 0)]));
        assert!(push_class(&ProjectionClass::bott(), &bad_block, &seq).is_err());
    }

    fn small_schedule() -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::vec(0u64..6, 3..5)
            .prop_map(|v| v.iter().enumerate().map(|(i, x)| x + (1 << i) + 1).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bott_decomposition_holds(d in small_schedule()) {
            let seq = derive_sequences(&ParameterSchedule::explicit(d.clone()), d.len()).unwrap();
            for m in 0..=d.len().min(4) {
                let dec = bott_decomposition(&bott_class(&seq, m).unwrap(), &seq).unwrap();
                prop_assert!(dec.matches_expected, "m={}", m);
            }
        }

        #[test]
        fn functoriality(d in small_schedule(), extra in 0u32..3) {
            let seq = derive_sequences(&ParameterSchedule::explicit(d.clone()), 3).unwrap();
            let start = ProjectionClass::bott()
                .direct_sum(&ProjectionClass::trivial(0, extra).unwrap())
                .unwrap();
            let f = connecting_map_between(&seq, 0, 1).unwrap();
            let g = connecting_map_between(&seq, 1, 3).unwrap();
            let fg = compose(&f, &g).unwrap();
            let stepwise = push_class(&push_class(&start, &f, &seq).unwrap(), &g, &seq).unwrap();
            prop_assert_eq!(&push_class(&start, &fg, &seq).unwrap(), &stepwise);
            prop_assert_eq!(&push_class_pathwise(&start, &fg, &seq).unwrap(), &stepwise);
        }

        #[test]
        fn trace_additive_and_invariant(d in small_schedule(), a in 0u32..20, m in 0usize..3) {
            let seq = derive_sequences(&ParameterSchedule::explicit(d.clone()), 3).unwrap();
            let p = bott_class(&seq, m).unwrap();
            let q = ProjectionClass::trivial(m, a).unwrap();
            let sum = p.direct_sum(&q).unwrap();
            let tp = trace_of_class(&p, &seq).unwrap();
            let tq = trace_of_class(&q, &seq).unwrap();
            prop_assert_eq!(trace_of_class(&sum, &seq).unwrap(), &tp + &tq);
            let up = push_class(&sum, &connecting_map_between(&seq, m, 3).unwrap(), &seq).unwrap();
            prop_assert_eq!(trace_of_class(&up, &seq).unwrap(), tp + tq);
        }
    }
}
