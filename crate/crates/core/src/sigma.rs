//! σ-fields modulo null sets on finite spaces.
//!
//! A finite sub-σ-field is generated by a [`Partition`] of the ground set. Its
//! completion (adjoining every null and co-null event) is represented by the
//! trace of that partition on the support: an event is measurable in the
//! completion iff its intersection with the support is a union of trace
//! blocks. Intersections of completions are then connected components of the
//! "shares a block in either field" graph on support cells.
//!
//! The scans over block unions use 64-bit cell masks and refuse to run past
//! explicit budgets; exceeding one is an error, never a silent truncation.

use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::dsu::Dsu;
use crate::error::{check_budget, Error, Result};
use crate::space::{Event, FiniteJoint, Rectangle};

/// Largest `log2` of the number of `(A, B)` pairs a null-split scan visits.
pub const PAIR_SCAN_LOG2_LIMIT: usize = 20;
/// Largest `x_size + y_size` for rectangle scans.
pub const RECTANGLE_SCAN_LOG2_LIMIT: usize = 24;
/// Largest `y_size` for scans over subsets of `Y`.
pub const COLUMN_SCAN_LOG2_LIMIT: usize = 24;

const MAX_MASK_CELLS: usize = 64;

/// A partition of `0..n`, with block ids numbered densely in order of first
/// appearance so that equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Partition {
    block_id: Vec<usize>,
}

impl Partition {
    /// Canonicalizes arbitrary labels: points with equal labels share a block.
    pub fn from_labels<L: Eq + std::hash::Hash + Clone>(labels: &[L]) -> Self {
        let mut seen = std::collections::HashMap::new();
        let block_id = labels
            .iter()
            .map(|l| {
                let next = seen.len();
                *seen.entry(l.clone()).or_insert(next)
            })
            .collect();
        Partition { block_id }
    }

    pub fn trivial(n: usize) -> Self {
        Partition {
            block_id: vec![0; n],
        }
    }

    pub fn discrete(n: usize) -> Self {
        Partition {
            block_id: (0..n).collect(),
        }
    }

    /// The partition generating `σ(X)`: cells grouped by row.
    pub fn rows(j: &FiniteJoint) -> Self {
        Partition::from_labels(
            &(0..j.cell_count())
                .map(|c| j.coords(c).0)
                .collect::<Vec<_>>(),
        )
    }

    /// The partition generating `σ(Y)`: cells grouped by column.
    pub fn columns(j: &FiniteJoint) -> Self {
        Partition::from_labels(
            &(0..j.cell_count())
                .map(|c| j.coords(c).1)
                .collect::<Vec<_>>(),
        )
    }

    pub fn len(&self) -> usize {
        self.block_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_id.is_empty()
    }

    pub fn block_of(&self, point: usize) -> usize {
        self.block_id[point]
    }

    pub fn ids(&self) -> &[usize] {
        &self.block_id
    }

    pub fn block_count(&self) -> usize {
        self.block_id.iter().max().map_or(0, |m| m + 1)
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.block_count()];
        for (p, &b) in self.block_id.iter().enumerate() {
            out[b].push(p);
        }
        out
    }

    /// The finest partition coarser than both: it generates the plain
    /// intersection `σ(self) ∩ σ(other)`.
    pub fn common_coarsening(&self, other: &Partition) -> Result<Partition> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "partitions of {} and {} points",
                self.len(),
                other.len()
            )));
        }
        Ok(link_blocks(self.len(), [self, other]))
    }

    fn block_masks(&self) -> Vec<u64> {
        let mut masks = vec![0u64; self.block_count()];
        for (p, &b) in self.block_id.iter().enumerate() {
            masks[b] |= 1 << p;
        }
        masks
    }
}

/// Components of the graph on `0..n` linking points that share a block in
/// any of the given partitions.
fn link_blocks<'p>(n: usize, parts: impl IntoIterator<Item = &'p Partition>) -> Partition {
    let mut dsu = Dsu::new(n);
    for part in parts {
        let mut first = vec![usize::MAX; part.block_count()];
        for (p, &b) in part.block_id.iter().enumerate() {
            if first[b] == usize::MAX {
                first[b] = p;
            } else {
                dsu.union(first[b], p);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|p| dsu.find(p)).collect();
    Partition::from_labels(&roots)
}

/// A sub-σ-field of a joint, completed with the null sets of that joint.
///
/// `blocks` partitions the support cells, listed row-major in `cells`.
#[derive(Debug, Clone)]
pub struct CompletedSigma<'a> {
    base: &'a FiniteJoint,
    cells: Vec<usize>,
    blocks: Partition,
}

impl PartialEq for CompletedSigma<'_> {
    fn eq(&self, other: &Self) -> bool {
        same_base(self.base, other.base) && self.blocks == other.blocks
    }
}

fn same_base(a: &FiniteJoint, b: &FiniteJoint) -> bool {
    std::ptr::eq(a, b) || a == b
}

impl<'a> CompletedSigma<'a> {
    pub fn base(&self) -> &'a FiniteJoint {
        self.base
    }

    /// Support cells (flat indices) in the order the blocks refer to.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn blocks(&self) -> &Partition {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.block_count()
    }

    /// Whether `e` belongs to the completed field.
    pub fn is_measurable(&self, e: &Event) -> bool {
        let mut state = vec![None; self.blocks.block_count()];
        for (k, &c) in self.cells.iter().enumerate() {
            let inside = e.mask()[c];
            let b = self.blocks.block_of(k);
            match state[b] {
                None => state[b] = Some(inside),
                Some(s) if s != inside => return false,
                _ => {}
            }
        }
        true
    }

    /// Each block as an event of the product space.
    pub fn block_events(&self) -> Vec<Event> {
        let j = self.base;
        self.blocks
            .blocks()
            .into_iter()
            .map(|b| {
                let mut mask = vec![false; j.cell_count()];
                b.into_iter().for_each(|k| mask[self.cells[k]] = true);
                Event::from_mask(j.x_size(), j.y_size(), mask).expect("shape matches base")
            })
            .collect()
    }

    /// The completed σ-field generated by a family of events: support cells
    /// share a block iff every event contains both or neither.
    pub fn generated_by(base: &'a FiniteJoint, events: &[Event]) -> Result<Self> {
        for e in events {
            base.check_event(e)?;
        }
        let cells = base.support_cells();
        let signatures: Vec<Vec<bool>> = cells
            .iter()
            .map(|&c| events.iter().map(|e| e.mask()[c]).collect())
            .collect();
        Ok(CompletedSigma {
            base,
            blocks: Partition::from_labels(&signatures),
            cells,
        })
    }
}

/// Completes `σ(pi)` with the null sets of `j`.
pub fn complete<'a>(j: &'a FiniteJoint, pi: &Partition) -> Result<CompletedSigma<'a>> {
    if pi.len() != j.cell_count() {
        return Err(Error::Shape(format!(
            "partition covers {} points, joint has {} cells",
            pi.len(),
            j.cell_count()
        )));
    }
    let cells = j.support_cells();
    let trace: Vec<usize> = cells.iter().map(|&c| pi.block_of(c)).collect();
    Ok(CompletedSigma {
        base: j,
        blocks: Partition::from_labels(&trace),
        cells,
    })
}

/// Intersection of two completed σ-fields on the same joint.
pub fn intersect_completed<'a>(
    s1: &CompletedSigma<'a>,
    s2: &CompletedSigma<'a>,
) -> Result<CompletedSigma<'a>> {
    if !same_base(s1.base, s2.base) {
        return Err(Error::BaseMismatch);
    }
    Ok(CompletedSigma {
        base: s1.base,
        cells: s1.cells.clone(),
        blocks: link_blocks(s1.cells.len(), [&s1.blocks, &s2.blocks]),
    })
}

/// Completion of the plain intersection `σ(pa) ∩ σ(pb)`.
pub fn complete_plain_intersection<'a>(
    j: &'a FiniteJoint,
    pa: &Partition,
    pb: &Partition,
) -> Result<CompletedSigma<'a>> {
    complete(j, &pa.common_coarsening(pb)?)
}

/// Verdict of a null-split scan, with the first offending pair if any.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSplitVerdict {
    pub holds: bool,
    pub counterexample: Option<(Event, Event)>,
}

#[derive(Clone, Copy)]
enum Conclusion {
    /// `A` or `B` agrees a.s. with some event of `σ(pa) ∩ σ(pb)`.
    Reducible,
    /// `A` or `B` is null.
    Degenerate,
}

fn support_bits(support: &[bool]) -> u64 {
    support
        .iter()
        .enumerate()
        .filter(|(_, s)| **s)
        .fold(0u64, |m, (c, _)| m | (1 << c))
}

fn all_unions(blocks: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; 1 << blocks.len()];
    for s in 1..out.len() {
        let low = s.trailing_zeros() as usize;
        out[s] = out[s & (s - 1)] | blocks[low];
    }
    out
}

fn mask_to_event(x_size: usize, y_size: usize, mask: u64) -> Event {
    let member = (0..x_size * y_size).map(|c| mask >> c & 1 == 1).collect();
    Event::from_mask(x_size, y_size, member).expect("mask sized to grid")
}

/// Scans all `A ∈ σ(pa)`, `B ∈ σ(pb)` with `A ∩ B` and `A^c ∩ B^c` missing
/// the support, in descending block-union order, and tests the conclusion.
fn null_split_scan(
    x_size: usize,
    y_size: usize,
    support: &[bool],
    pa: &Partition,
    pb: &Partition,
    conclusion: Conclusion,
) -> Result<NullSplitVerdict> {
    let n = support.len();
    if pa.len() != n || pb.len() != n {
        return Err(Error::Shape(format!(
            "partitions of {} and {} points, joint has {n} cells",
            pa.len(),
            pb.len()
        )));
    }
    check_budget("cells for mask scan", n, MAX_MASK_CELLS.min(63))?;
    check_budget(
        "null-split pairs",
        pa.block_count() + pb.block_count(),
        PAIR_SCAN_LOG2_LIMIT,
    )?;
    let full = (1u64 << n) - 1;
    let supp = support_bits(support);
    let a_unions = all_unions(&pa.block_masks());
    let b_unions = all_unions(&pb.block_masks());
    // Every D ∈ σ(pa) ∩ σ(pb), traced on the support.
    let shared: HashSet<u64> = match conclusion {
        Conclusion::Reducible => {
            let common = pa.common_coarsening(pb)?;
            all_unions(&common.block_masks())
                .into_iter()
                .map(|d| d & supp)
                .collect()
        }
        Conclusion::Degenerate => HashSet::new(),
    };
    let satisfied = |a: u64, b: u64| match conclusion {
        Conclusion::Reducible => shared.contains(&(a & supp)) || shared.contains(&(b & supp)),
        Conclusion::Degenerate => a & supp == 0 || b & supp == 0,
    };
    for &a in a_unions.iter().rev() {
        for &b in b_unions.iter().rev() {
            let split = (a & b) & supp == 0 && (!a & !b & full) & supp == 0;
            if split && !satisfied(a, b) {
                return Ok(NullSplitVerdict {
                    holds: false,
                    counterexample: Some((
                        mask_to_event(x_size, y_size, a),
                        mask_to_event(x_size, y_size, b),
                    )),
                });
            }
        }
    }
    Ok(NullSplitVerdict {
        holds: true,
        counterexample: None,
    })
}

/// Whether every null split `(A, B)` of `σ(pa) × σ(pb)` has `A` or `B` equal
/// a.s. to an event of the plain intersection `σ(pa) ∩ σ(pb)`. This holds
/// exactly when completion commutes with intersection for the two fields.
pub fn check_null_splits_reducible(
    j: &FiniteJoint,
    pa: &Partition,
    pb: &Partition,
) -> Result<NullSplitVerdict> {
    null_split_scan(
        j.x_size(),
        j.y_size(),
        j.support_mask(),
        pa,
        pb,
        Conclusion::Reducible,
    )
}

/// Stronger variant: every null split has `P(A) = 0` or `P(B) = 0`.
pub fn check_null_splits_degenerate(
    j: &FiniteJoint,
    pa: &Partition,
    pb: &Partition,
) -> Result<NullSplitVerdict> {
    null_split_scan(
        j.x_size(),
        j.y_size(),
        j.support_mask(),
        pa,
        pb,
        Conclusion::Degenerate,
    )
}

/// The reducibility scan with null sets quantified over a whole family of
/// laws: an event is null for the family iff it is null for every member,
/// i.e. iff it misses the union of the supports.
pub fn check_null_splits_reducible_family(
    family: &[FiniteJoint],
    pa: &Partition,
    pb: &Partition,
) -> Result<NullSplitVerdict> {
    let first = family
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty family".into()))?;
    let (xs, ys) = (first.x_size(), first.y_size());
    let mut support = vec![false; xs * ys];
    for q in family {
        if (q.x_size(), q.y_size()) != (xs, ys) {
            return Err(Error::Shape(format!(
                "family mixes {xs}x{ys} and {}x{} joints",
                q.x_size(),
                q.y_size()
            )));
        }
        support
            .iter_mut()
            .zip(q.support_mask())
            .for_each(|(s, t)| *s |= t);
    }
    null_split_scan(xs, ys, &support, pa, pb, Conclusion::Reducible)
}

/// All events `A ∩ B` with `A ∈ σ(pa)`, `B ∈ σ(pb)` and
/// `P(A ∩ B) + P(A^c ∩ B^c) = 1`, i.e. `A` and `B` agree a.s.
/// Deduplicated and sorted by cell mask.
pub fn agreement_class(j: &FiniteJoint, pa: &Partition, pb: &Partition) -> Result<Vec<Event>> {
    let n = j.cell_count();
    if pa.len() != n || pb.len() != n {
        return Err(Error::Shape("partition does not cover the grid".into()));
    }
    check_budget("cells for mask scan", n, 63)?;
    check_budget(
        "agreement pairs",
        pa.block_count() + pb.block_count(),
        PAIR_SCAN_LOG2_LIMIT,
    )?;
    let supp = support_bits(j.support_mask());
    let a_unions = all_unions(&pa.block_masks());
    let b_unions = all_unions(&pb.block_masks());
    let mut found = BTreeSet::new();
    for &a in &a_unions {
        for &b in &b_unions {
            if (a ^ b) & supp == 0 {
                found.insert(a & b);
            }
        }
    }
    Ok(found
        .into_iter()
        .map(|m| mask_to_event(j.x_size(), j.y_size(), m))
        .collect())
}

/// Admissibility verdict for the two-component Gibbs sampler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// A rectangle `U × V` with `P(U × V) = P(U^c × V^c) = 0` and both
    /// marginals positive, present iff not admissible.
    pub witness: Option<Rectangle>,
    /// Atoms of the intersection field, over support cells in row-major order.
    pub atoms: Partition,
    pub atom_count: usize,
}

/// Decides admissibility by connectivity of the bipartite support graph
/// (positive rows and columns, one edge per support cell).
pub fn check_gibbs_admissible(j: &FiniteJoint) -> AdmissibilityReport {
    let (xs, ys) = (j.x_size(), j.y_size());
    let mut dsu = Dsu::new(xs + ys);
    let cells = j.support_cells();
    for &c in &cells {
        let (x, y) = j.coords(c);
        dsu.union(x, xs + y);
    }
    let comp: Vec<usize> = cells.iter().map(|&c| dsu.find(j.coords(c).0)).collect();
    let atoms = Partition::from_labels(&comp);
    let atom_count = atoms.block_count();
    let witness = (atom_count > 1).then(|| {
        // component of the row-major smallest support cell
        let root = comp[0];
        let rows = j.positive_rows();
        let cols = j.positive_cols();
        let u = (0..xs).map(|x| rows[x] && dsu.find(x) != root).collect();
        let v = (0..ys)
            .map(|y| cols[y] && dsu.find(xs + y) == root)
            .collect();
        Rectangle::new(u, v)
    });
    AdmissibilityReport {
        admissible: atom_count == 1,
        witness,
        atoms,
        atom_count,
    }
}

/// Atoms of the intersection of the completed coordinate fields.
pub fn d_atoms(j: &FiniteJoint) -> Partition {
    check_gibbs_admissible(j).atoms
}

/// Probability mass of each block of a partition of the support cells.
pub fn atom_masses(j: &FiniteJoint, atoms: &Partition) -> Vec<f64> {
    let cells = j.support_cells();
    let mut m = vec![0.0; atoms.block_count()];
    for (k, &c) in cells.iter().enumerate() {
        m[atoms.block_of(k)] += j.probs()[c];
    }
    m
}

fn row_column_masks(j: &FiniteJoint) -> Vec<u64> {
    (0..j.x_size())
        .map(|x| {
            (0..j.y_size())
                .filter(|&y| j.in_support(x, y))
                .fold(0u64, |m, y| m | (1 << y))
        })
        .collect()
}

/// Brute-force search for a rectangle `U × V` with
/// `P(U × V) = P(U^c × V^c) = 0`, `P(X ∈ U) > 0` and `P(Y ∈ V) > 0`.
/// Scans all `2^(x_size + y_size)` rectangles.
pub fn find_degenerate_rectangle(j: &FiniteJoint) -> Result<Option<Rectangle>> {
    let (xs, ys) = (j.x_size(), j.y_size());
    check_budget("rectangles", xs + ys, RECTANGLE_SCAN_LOG2_LIMIT)?;
    let rows = row_column_masks(j);
    let ymask = (1u64 << ys) - 1;
    let row_unions = all_unions(&rows);
    let full_u = (1usize << xs) - 1;
    let colsupp = row_unions[full_u];
    let hit = (0..=full_u).into_par_iter().find_map_first(|u| {
        let inside = row_unions[u];
        let outside = row_unions[full_u & !u];
        if inside == 0 {
            return None;
        }
        (0..=ymask).find_map(|v| {
            let null_uv = inside & v == 0;
            let null_opp = outside & !v & ymask == 0;
            (null_uv && null_opp && v & colsupp != 0).then_some((u, v))
        })
    });
    Ok(hit.map(|(u, v)| {
        Rectangle::new(
            (0..xs).map(|x| u >> x & 1 == 1).collect(),
            (0..ys).map(|y| v >> y & 1 == 1).collect(),
        )
    }))
}

/// Oracle for admissibility: true iff no degenerate rectangle exists.
pub fn oracle_rectangle_scan(j: &FiniteJoint) -> Result<bool> {
    Ok(find_degenerate_rectangle(j)?.is_none())
}

/// Values of `E(E(1_R | X) | Y) + E(E(1_R | Y) | X)` on support cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleProjection {
    pub holds: bool,
    /// One value per support cell, row-major.
    pub values: Vec<f64>,
}

/// Whether the symmetrized double projection of the rectangle indicator is
/// positive almost surely.
pub fn check_double_projection_positive(
    j: &FiniteJoint,
    r: &Rectangle,
) -> Result<DoubleProjection> {
    let (xs, ys) = (j.x_size(), j.y_size());
    if r.u.len() != xs || r.v.len() != ys {
        return Err(Error::Shape("rectangle does not match the grid".into()));
    }
    let alpha = j.conditional_alpha();
    let beta = j.conditional_beta();
    // E(1_R | X)(x) = 1_U(x) α(x)(V), then average over β(y)
    let given_x: Vec<f64> = (0..xs)
        .map(|x| {
            if r.u[x] {
                alpha.measure(x, &r.v).unwrap_or(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let given_y: Vec<f64> = (0..ys)
        .map(|y| {
            if r.v[y] {
                beta.measure(y, &r.u).unwrap_or(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let mut values = Vec::new();
    for c in j.support_cells() {
        let (x, y) = j.coords(c);
        let first: f64 = beta
            .row(y)
            .expect("support column has a conditional")
            .iter()
            .zip(&given_x)
            .map(|(p, h)| p * h)
            .sum();
        let second: f64 = alpha
            .row(x)
            .expect("support row has a conditional")
            .iter()
            .zip(&given_y)
            .map(|(p, h)| p * h)
            .sum();
        values.push(first + second);
    }
    Ok(DoubleProjection {
        holds: values.iter().all(|&v| v > 0.0),
        values,
    })
}

/// Verdict of the zero-one conditional scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroOneVerdict {
    pub holds: bool,
    /// A set `V ⊂ Y` with `α(x)(V) ∈ {0, 1}` for all positive rows but not
    /// constant across them.
    pub witness: Option<Vec<bool>>,
}

/// Whether every `V` with `α(X)(V) ∈ {0, 1}` a.s. has `α(X)(V)` a.s.
/// constant. Evaluated from support masks, so the 0/1 tests are exact.
pub fn check_conditional_zero_one(j: &FiniteJoint) -> Result<ZeroOneVerdict> {
    let ys = j.y_size();
    check_budget("column subsets", ys, COLUMN_SCAN_LOG2_LIMIT)?;
    let rows: Vec<u64> = row_column_masks(j)
        .into_iter()
        .filter(|&m| m != 0)
        .collect();
    let hit = (0u64..1 << ys).into_par_iter().find_first(|&v| {
        let mut zero = false;
        let mut one = false;
        for &r in &rows {
            if r & v == 0 {
                zero = true;
            } else if r & !v == 0 {
                one = true;
            } else {
                return false;
            }
        }
        zero && one
    });
    Ok(ZeroOneVerdict {
        holds: hit.is_none(),
        witness: hit.map(|v| (0..ys).map(|y| v >> y & 1 == 1).collect()),
    })
}

/// Whether `α(x)(V) > 0` for every positive row `x` and every `V` in
/// `{V : 0 < P(α(X)(V) = 1) < 1}`.
pub fn check_conditional_reachability(j: &FiniteJoint) -> Result<bool> {
    let ys = j.y_size();
    check_budget("column subsets", ys, COLUMN_SCAN_LOG2_LIMIT)?;
    let rows: Vec<u64> = row_column_masks(j)
        .into_iter()
        .filter(|&m| m != 0)
        .collect();
    let violated = (0u64..1 << ys).into_par_iter().any(|v| {
        let full = rows.iter().filter(|&&r| r & !v == 0).count();
        let in_family = full > 0 && full < rows.len();
        in_family && rows.iter().any(|&r| r & v == 0)
    });
    Ok(!violated)
}
