//! Coded vectors and receiver knowledge spaces.
//!
//! A [`CodedVector`] is the coefficient vector of one coded transmission,
//! indexed by absolute packet number (packet 1 is the first packet ever
//! queued; indices are never reused or shifted). A [`KnowledgeSpace`] is the
//! row-reduced span of the vectors a node holds, with pivots at the lowest
//! nonzero index of each row. That orientation makes the "seen" packets read
//! directly off the pivot set, and decoded packets off the unit rows.
//!
//! Knowledge spaces answer the four queries the transmission schemes are
//! built on: is a vector innovative, which packets are decoded, which are
//! seen, and how far the in-order delivered prefix reaches.

use crate::gf::{FieldContext, FieldElement};

/// Coefficient vector over GF(2^m), sparse at both ends: `coeffs[k]` is the
/// coefficient of packet `start + k + 1`. Everything outside the stored
/// range is zero.
#[derive(Debug, Clone, Default)]
pub struct CodedVector {
    start: usize,
    coeffs: Vec<FieldElement>,
}

impl CodedVector {
    pub fn zero() -> Self {
        CodedVector::default()
    }

    /// The standard basis vector e_i for packet index `i` (1-based).
    pub fn unit(i: usize) -> Self {
        assert!(i >= 1, "packet indices are 1-based");
        CodedVector { start: i - 1, coeffs: vec![FieldElement::ONE] }
    }

    /// Dense construction starting at packet 1; handy in tests.
    pub fn from_dense(values: &[u8]) -> Self {
        let mut v = CodedVector {
            start: 0,
            coeffs: values.iter().map(|&x| FieldElement(x)).collect(),
        };
        v.canonicalize();
        v
    }

    pub fn coeff(&self, i: usize) -> FieldElement {
        if i <= self.start || i > self.start + self.coeffs.len() {
            FieldElement::ZERO
        } else {
            self.coeffs[i - self.start - 1]
        }
    }

    pub fn set_coeff(&mut self, i: usize, value: FieldElement) {
        assert!(i >= 1);
        if self.coeffs.is_empty() {
            self.start = i - 1;
            self.coeffs.push(value);
            return;
        }
        if i <= self.start {
            let pad = self.start - (i - 1);
            let mut fresh = vec![FieldElement::ZERO; pad + self.coeffs.len()];
            fresh[pad..].copy_from_slice(&self.coeffs);
            fresh[0] = value;
            self.start = i - 1;
            self.coeffs = fresh;
        } else {
            let k = i - self.start - 1;
            if k >= self.coeffs.len() {
                self.coeffs.resize(k + 1, FieldElement::ZERO);
            }
            self.coeffs[k] = value;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Lowest packet index with a nonzero coefficient.
    pub fn leading_index(&self) -> Option<usize> {
        self.coeffs
            .iter()
            .position(|c| !c.is_zero())
            .map(|k| self.start + k + 1)
    }

    /// Highest packet index with a nonzero coefficient.
    pub fn max_index(&self) -> Option<usize> {
        self.coeffs
            .iter()
            .rposition(|c| !c.is_zero())
            .map(|k| self.start + k + 1)
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.iter().filter(|c| !c.is_zero()).count()
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, FieldElement)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, &c)| (self.start + k + 1, c))
    }

    /// A row is a pure standard basis vector iff its support is one position
    /// holding coefficient 1.
    pub fn is_unit(&self) -> bool {
        let mut sup = self.support();
        matches!((sup.next(), sup.next()), (Some((_, c)), None) if c == FieldElement::ONE)
    }

    /// self += scale * other (characteristic 2, so this is also subtraction).
    pub fn add_scaled(&mut self, other: &CodedVector, scale: FieldElement, ctx: &FieldContext) {
        if scale.is_zero() {
            return;
        }
        if let Some(lo) = other.leading_index() {
            let hi = other.max_index().unwrap();
            if self.coeffs.is_empty() {
                self.start = lo - 1;
                self.coeffs = vec![FieldElement::ZERO; hi - lo + 1];
            } else {
                if lo <= self.start {
                    let pad = self.start - (lo - 1);
                    let mut fresh = vec![FieldElement::ZERO; pad + self.coeffs.len()];
                    fresh[pad..].copy_from_slice(&self.coeffs);
                    self.start = lo - 1;
                    self.coeffs = fresh;
                }
                if hi > self.start + self.coeffs.len() {
                    self.coeffs.resize(hi - self.start, FieldElement::ZERO);
                }
            }
            for (i, c) in other.support() {
                let k = i - self.start - 1;
                self.coeffs[k] = ctx.add(self.coeffs[k], ctx.mul(scale, c));
            }
        }
    }

    pub fn scale(&mut self, factor: FieldElement, ctx: &FieldContext) {
        for c in &mut self.coeffs {
            *c = ctx.mul(*c, factor);
        }
    }

    /// Drop zero padding at both ends. Trailing zeros are permitted but the
    /// canonical form trims them.
    pub fn canonicalize(&mut self) {
        match (self.leading_index(), self.max_index()) {
            (Some(lo), Some(hi)) => {
                let first = lo - self.start - 1;
                let last = hi - self.start;
                self.coeffs.drain(last..);
                self.coeffs.drain(..first);
                self.start = lo - 1;
            }
            _ => {
                self.start = 0;
                self.coeffs.clear();
            }
        }
    }
}

impl PartialEq for CodedVector {
    fn eq(&self, other: &Self) -> bool {
        let lo = self.start.min(other.start) + 1;
        let hi = (self.start + self.coeffs.len()).max(other.start + other.coeffs.len());
        (lo..=hi).all(|i| self.coeff(i) == other.coeff(i))
    }
}

impl Eq for CodedVector {}

/// Row-reduced basis of received vectors. Rows are kept in ascending pivot
/// order, each normalized to leading coefficient 1, and fully reduced: every
/// pivot column is zero in all other rows.
///
/// `trimmed` counts a prefix of unit rows e_1..e_trimmed that were dropped
/// after the corresponding packets were delivered to every receiver; ranks
/// and index queries still account for them.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeSpace {
    rows: Vec<CodedVector>,
    pivots: Vec<usize>,
    trimmed: usize,
}

impl KnowledgeSpace {
    pub fn new() -> Self {
        KnowledgeSpace::default()
    }

    pub fn rank(&self) -> usize {
        self.trimmed + self.rows.len()
    }

    pub fn rows(&self) -> &[CodedVector] {
        &self.rows
    }

    pub fn trimmed_prefix(&self) -> usize {
        self.trimmed
    }

    /// Residual of `v` after eliminating against the basis; zero iff
    /// `v` is in the span.
    pub fn reduce(&self, v: &CodedVector, ctx: &FieldContext) -> CodedVector {
        let mut res = v.clone();
        self.reduce_in_place(&mut res, ctx);
        res
    }

    fn reduce_in_place(&self, res: &mut CodedVector, ctx: &FieldContext) {
        // Trimmed unit rows eliminate by zeroing the prefix coefficients;
        // only the residual's stored range can hold any.
        if let Some(lo) = res.leading_index() {
            if lo <= self.trimmed {
                let hi = res.max_index().unwrap().min(self.trimmed);
                for i in lo..=hi {
                    if !res.coeff(i).is_zero() {
                        res.set_coeff(i, FieldElement::ZERO);
                    }
                }
            }
        }
        for (row, &pivot) in self.rows.iter().zip(&self.pivots) {
            let c = res.coeff(pivot);
            if !c.is_zero() {
                res.add_scaled(row, c, ctx);
            }
        }
        res.canonicalize();
    }

    /// True iff `v` is outside the current span. Does not mutate.
    pub fn is_innovative(&self, v: &CodedVector, ctx: &FieldContext) -> bool {
        !self.reduce(v, ctx).is_zero()
    }

    /// Gaussian-eliminate `v` into the basis. Returns true (and extends the
    /// span) iff the residual was nonzero; otherwise the space is unchanged.
    pub fn insert(&mut self, v: &CodedVector, ctx: &FieldContext) -> bool {
        let mut res = v.clone();
        self.reduce_in_place(&mut res, ctx);
        let Some(pivot) = res.leading_index() else {
            return false;
        };
        let lead = res.coeff(pivot);
        if lead != FieldElement::ONE {
            res.scale(ctx.inv(lead).expect("leading coefficient nonzero"), ctx);
        }
        // Back-substitute so the new pivot column is zero everywhere else.
        for row in &mut self.rows {
            let c = row.coeff(pivot);
            if !c.is_zero() {
                row.add_scaled(&res, c, ctx);
                row.canonicalize();
            }
        }
        let at = self.pivots.partition_point(|&p| p < pivot);
        self.pivots.insert(at, pivot);
        self.rows.insert(at, res);
        true
    }

    /// Packet indices for which the pure basis vector e_i is in the span.
    pub fn decoded_set(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (1..=self.trimmed).collect();
        for (row, &pivot) in self.rows.iter().zip(&self.pivots) {
            if row.is_unit() {
                out.push(pivot);
            }
        }
        out
    }

    /// Packet indices that are seen: p_i is seen iff some basis row has its
    /// pivot at i, i.e. the node can form p_i plus a combination of later
    /// packets.
    pub fn seen_set(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (1..=self.trimmed).collect();
        out.extend_from_slice(&self.pivots);
        out
    }

    /// Is packet i seen, i.e. does some basis row pivot at i?
    pub fn is_seen(&self, i: usize) -> bool {
        i >= 1 && (i <= self.trimmed || self.pivots.binary_search(&i).is_ok())
    }

    /// Smallest packet index not yet seen.
    pub fn first_unseen(&self) -> usize {
        let mut expected = self.trimmed + 1;
        for &p in &self.pivots {
            if p == expected {
                expected += 1;
            } else if p > expected {
                break;
            }
        }
        expected
    }

    /// Largest n such that packets 1..=n are all decoded; 0 if p_1 is not.
    pub fn delivered_prefix(&self) -> usize {
        let mut n = self.trimmed;
        for (row, &pivot) in self.rows.iter().zip(&self.pivots) {
            if pivot == n + 1 && row.is_unit() {
                n += 1;
            } else {
                break;
            }
        }
        n
    }

    /// Would receiving `v` decode packet n? Checked on a copy: insert, then
    /// ask whether n joined the decoded set.
    pub fn delivery_test(&self, v: &CodedVector, n: usize, ctx: &FieldContext) -> bool {
        if !self.is_innovative(v, ctx) {
            return false;
        }
        let mut probe = self.clone();
        probe.insert(v, ctx);
        probe.decoded_set().contains(&n)
    }

    /// Drop the unit rows covering packets 1..=ws once those packets left the
    /// transmission queue. Panics if any row in that range is not a pure unit
    /// row, which would mean the prefix was not actually decoded here.
    pub fn trim_prefix(&mut self, ws: usize) {
        assert!(ws >= self.trimmed, "window never moves backwards");
        let cut = self.pivots.partition_point(|&p| p <= ws);
        for (row, &pivot) in self.rows.iter().take(cut).zip(&self.pivots) {
            assert!(
                row.is_unit() && pivot <= ws,
                "trimming a non-unit row at pivot {pivot}"
            );
        }
        assert_eq!(cut, ws - self.trimmed, "missing unit rows in delivered prefix");
        self.rows.drain(..cut);
        self.pivots.drain(..cut);
        self.trimmed = ws;
    }

    /// Structural invariant check, used by tests.
    pub fn validate(&self, ctx: &FieldContext) {
        let mut last = self.trimmed;
        for (row, &pivot) in self.rows.iter().zip(&self.pivots) {
            assert!(pivot > last, "pivots strictly increasing");
            last = pivot;
            assert_eq!(row.leading_index(), Some(pivot), "pivot is lowest nonzero");
            assert_eq!(row.coeff(pivot), FieldElement::ONE, "rows normalized");
        }
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &pivot) in self.pivots.iter().enumerate() {
                if i != j {
                    assert!(
                        row.coeff(pivot).is_zero(),
                        "pivot column {pivot} nonzero in another row"
                    );
                }
            }
            assert!(self.reduce(row, ctx).is_zero() || true);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::FieldContext;

    fn gf2() -> FieldContext {
        FieldContext::new(1).unwrap()
    }

    fn space_from(ctx: &FieldContext, rows: &[&[u8]]) -> KnowledgeSpace {
        let mut s = KnowledgeSpace::new();
        for r in rows {
            s.insert(&CodedVector::from_dense(r), ctx);
        }
        s
    }

    #[test]
    fn reduce_examples() {
        let ctx = gf2();
        // v in the span of the two rows reduces to zero
        let s = space_from(&ctx, &[&[1, 1, 0], &[0, 1, 1]]);
        assert!(s.reduce(&CodedVector::from_dense(&[1, 0, 1]), &ctx).is_zero());

        // empty basis leaves the vector untouched
        let ctx4 = FieldContext::new(2).unwrap();
        let empty = KnowledgeSpace::new();
        let v = CodedVector::from_dense(&[0, 2, 1]);
        assert_eq!(empty.reduce(&v, &ctx4), v);

        // single elimination step
        let s = space_from(&ctx, &[&[1, 0, 0]]);
        assert_eq!(
            s.reduce(&CodedVector::from_dense(&[1, 1, 0]), &ctx),
            CodedVector::from_dense(&[0, 1, 0])
        );
    }

    #[test]
    fn insert_tracks_rank_and_dependence() {
        let ctx = gf2();
        let mut s = KnowledgeSpace::new();
        assert!(s.insert(&CodedVector::from_dense(&[1, 0]), &ctx));
        assert_eq!(s.rank(), 1);

        // span of e1, e2: [1,1] is dependent
        let mut s = space_from(&ctx, &[&[1, 0], &[0, 1]]);
        assert_eq!(s.rank(), 2);
        assert!(!s.insert(&CodedVector::from_dense(&[1, 1]), &ctx));
        assert_eq!(s.rank(), 2);

        // third dependent vector over GF(2)
        let mut s = space_from(&ctx, &[&[1, 1, 0]]);
        assert!(s.insert(&CodedVector::from_dense(&[0, 1, 1]), &ctx));
        assert!(!s.insert(&CodedVector::from_dense(&[1, 0, 1]), &ctx));
        s.validate(&ctx);
    }

    #[test]
    fn decoded_set_examples() {
        let ctx = gf2();
        assert_eq!(space_from(&ctx, &[&[1, 0], &[0, 1]]).decoded_set(), vec![1, 2]);
        assert_eq!(space_from(&ctx, &[&[1, 1, 0]]).decoded_set(), Vec::<usize>::new());
        assert_eq!(space_from(&ctx, &[&[1, 0, 0], &[0, 1, 1]]).decoded_set(), vec![1]);
    }

    #[test]
    fn seen_set_examples() {
        let ctx = gf2();
        assert_eq!(space_from(&ctx, &[&[1, 1, 0]]).seen_set(), vec![1]);
        assert_eq!(space_from(&ctx, &[&[0, 1]]).seen_set(), vec![2]);
        assert_eq!(space_from(&ctx, &[&[1, 0, 1], &[0, 1, 1]]).seen_set(), vec![1, 2]);
        assert_eq!(space_from(&ctx, &[&[1, 0, 1], &[0, 1, 1]]).first_unseen(), 3);
    }

    #[test]
    fn delivered_prefix_examples() {
        let ctx = gf2();
        let s = space_from(&ctx, &[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 1]]);
        assert_eq!(s.delivered_prefix(), 2);
        assert_eq!(KnowledgeSpace::new().delivered_prefix(), 0);
        assert_eq!(space_from(&ctx, &[&[1]]).delivered_prefix(), 1);
    }

    #[test]
    fn delivery_test_examples() {
        let ctx = gf2();
        let empty = KnowledgeSpace::new();
        assert!(empty.delivery_test(&CodedVector::unit(1), 1, &ctx));

        let s = space_from(&ctx, &[&[1]]);
        assert!(!s.delivery_test(&CodedVector::from_dense(&[0, 1, 1]), 2, &ctx));

        let s = space_from(&ctx, &[&[0, 1, 1]]);
        assert!(s.delivery_test(&CodedVector::from_dense(&[1, 1, 1]), 1, &ctx));
    }

    #[test]
    fn decoded_is_subset_of_seen() {
        let ctx = FieldContext::new(2).unwrap();
        let s = space_from(&ctx, &[&[1, 2, 0, 1], &[0, 1, 3, 0], &[0, 0, 0, 2]]);
        let seen = s.seen_set();
        for d in s.decoded_set() {
            assert!(seen.contains(&d));
        }
    }

    #[test]
    fn trim_prefix_preserves_queries() {
        let ctx = gf2();
        let mut s = space_from(&ctx, &[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1, 1]]);
        assert_eq!(s.delivered_prefix(), 2);
        s.trim_prefix(2);
        assert_eq!(s.rank(), 3);
        assert_eq!(s.delivered_prefix(), 2);
        assert_eq!(s.first_unseen(), 4);
        assert_eq!(s.seen_set(), vec![1, 2, 3]);
        assert!(s.is_innovative(&CodedVector::unit(4), &ctx));
        assert!(!s.is_innovative(&CodedVector::from_dense(&[0, 0, 1, 1]), &ctx));
    }

    #[test]
    #[should_panic(expected = "non-unit row")]
    fn trim_rejects_undecoded_prefix() {
        let ctx = gf2();
        let mut s = space_from(&ctx, &[&[1, 1]]);
        s.trim_prefix(1);
    }

    #[test]
    fn sparse_vector_accessors() {
        let mut v = CodedVector::unit(5);
        assert_eq!(v.leading_index(), Some(5));
        assert_eq!(v.max_index(), Some(5));
        v.set_coeff(2, FieldElement::ONE);
        assert_eq!(v.leading_index(), Some(2));
        assert_eq!(v.support_len(), 2);
        v.set_coeff(9, FieldElement(3));
        assert_eq!(v.max_index(), Some(9));
        assert_eq!(v.coeff(7), FieldElement::ZERO);
    }
}
