//! The coding block: given the sender's view of every receiver's knowledge
//! space, build the transmission vector for this slot.
//!
//! All three schemes satisfy the innovation guarantee: the output is
//! innovative to every receiver that is still missing queue content. With a
//! field of order M >= R a suitable coefficient choice always exists.
//!
//! * **Scheme A** codes the oldest *unseen* packet of each incomplete
//!   receiver, oldest to newest, picking for each packet the smallest
//!   coefficient that lets every receiver mapped to it see that packet on
//!   reception.
//! * **Scheme B** codes the oldest *undecoded* (next needed) packet of each
//!   incomplete receiver, scanning newest to oldest and including a packet
//!   only when some receiver mapped to it would otherwise receive nothing
//!   innovative. Every receiver that forces an inclusion can deliver its
//!   next needed packet on reception.
//! * **RLNC** draws uniform coefficients over the whole transmission queue
//!   and redraws until the vector is innovative to all incomplete receivers.

use rand::{Rng, RngCore};
use std::collections::BTreeMap;

use crate::gf::{FieldContext, FieldElement};
use crate::linalg::{CodedVector, KnowledgeSpace};

/// Upper bound on RLNC redraws before assuming a logic error. Unreachable in
/// practice when M >= R.
const MAX_REDRAWS: u32 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodingScheme {
    SchemeA,
    SchemeB,
    Rlnc,
}

impl CodingScheme {
    pub fn label(self) -> &'static str {
        match self {
            CodingScheme::SchemeA => "scheme_a",
            CodingScheme::SchemeB => "scheme_b",
            CodingScheme::Rlnc => "rlnc",
        }
    }
}

/// Sender-side inputs for one slot. `a_total` is the absolute index of the
/// newest queued packet, `window_start` the delivered-to-all prefix already
/// dropped from the queue; the live queue is packets
/// `window_start + 1 ..= a_total`.
pub struct CodingInput<'a> {
    pub a_total: usize,
    pub window_start: usize,
    pub spaces: &'a [KnowledgeSpace],
    pub field: &'a FieldContext,
}

impl CodingInput<'_> {
    /// |V_s(t)|: number of packets currently in the transmission queue.
    pub fn transmission_list_size(&self) -> usize {
        self.a_total - self.window_start
    }

    fn incomplete(&self) -> Vec<usize> {
        (0..self.spaces.len())
            .filter(|&r| self.spaces[r].rank() < self.a_total)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CodingOutput {
    pub vector: CodedVector,
    /// Number of nonzero coefficients in the transmission.
    pub coded_packet_count: usize,
    /// Absolute index bounding the effective transmission queue.
    pub effective_end: usize,
    /// |V*_s(t)|: the effective transmission list size.
    pub effective_list_size: usize,
    /// RLNC diagnostic: how many draws (including the accepted one) it took.
    pub redraws: u32,
}

/// Receivers whose knowledge already spans the whole queue; they need no
/// innovation this slot.
pub fn complete_receivers(input: &CodingInput) -> Vec<usize> {
    (0..input.spaces.len())
        .filter(|&r| input.spaces[r].rank() >= input.a_total)
        .collect()
}

pub fn encode(
    scheme: CodingScheme,
    input: &CodingInput,
    rng: &mut dyn RngCore,
) -> CodingOutput {
    match scheme {
        CodingScheme::SchemeA => encode_scheme_a(input),
        CodingScheme::SchemeB => encode_scheme_b(input),
        CodingScheme::Rlnc => encode_rlnc(input, rng),
    }
}

/// Effective list bound shared by schemes A and B:
/// min(max_r(|V_r(t-1)| + 1), |V_s(t)|), in absolute packet indices.
fn effective_end(input: &CodingInput) -> usize {
    let max_rank = input.spaces.iter().map(|s| s.rank()).max().unwrap_or(0);
    (max_rank + 1).min(input.a_total)
}

pub fn encode_scheme_a(input: &CodingInput) -> CodingOutput {
    let field = input.field;
    let order = field.order();
    let incomplete = input.incomplete();
    assert!(!incomplete.is_empty(), "scheme A requires an incomplete receiver");

    // Distinct oldest-unseen packets, each with every receiver that needs it.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &r in &incomplete {
        let unseen = input.spaces[r].first_unseen();
        debug_assert!(unseen <= input.a_total);
        groups.entry(unseen).or_default().push(r);
    }

    let mut w = CodedVector::zero();
    for (&u, group) in &groups {
        // Receiver r will see packet u iff the residual of the final vector
        // has its lowest nonzero entry at u; with every index below u already
        // seen by r, that reduces to residual(w)[u] + alpha != 0. Later,
        // newer additions cannot disturb entries at or below u.
        let mut forbidden = [false; 256];
        let mut all_nonzero = true;
        for &r in group {
            let beta = input.spaces[r].reduce(&w, field).coeff(u);
            forbidden[beta.value() as usize] = true;
            all_nonzero &= !beta.is_zero();
        }
        let mut alpha = None;
        for cand in 1..order {
            if !forbidden[cand as usize] {
                alpha = Some(FieldElement(cand as u8));
                break;
            }
        }
        let alpha = match alpha {
            Some(a) => a,
            // Every nonzero value is someone's residual, which forces all
            // residuals nonzero, so the running sum already serves the whole
            // group and the packet can be left uncoded.
            None => {
                assert!(
                    all_nonzero,
                    "no coefficient keeps packet {u} useful for all receivers; field too small"
                );
                FieldElement::ZERO
            }
        };
        if !alpha.is_zero() {
            w.set_coeff(u, alpha);
        }
    }

    let eff = effective_end(input);
    debug_assert!(w.max_index().unwrap_or(0) <= eff);
    finish(w, eff, input, 1)
}

pub fn encode_scheme_b(input: &CodingInput) -> CodingOutput {
    let field = input.field;
    let order = field.order();
    let incomplete = input.incomplete();
    assert!(!incomplete.is_empty(), "scheme B requires an incomplete receiver");

    // Distinct next-needed packets (delivered prefix + 1) of the incomplete
    // receivers, newest first.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &r in &incomplete {
        let needed = input.spaces[r].delivered_prefix() + 1;
        debug_assert!(needed <= input.a_total);
        groups.entry(needed).or_default().push(r);
    }

    let mut iter = groups.iter().rev();
    let (&newest, _) = iter.next().expect("at least one next-needed packet");
    let mut w = CodedVector::unit(newest);

    for (&u, group) in iter {
        // Include packet u only if some receiver needing it would otherwise
        // get nothing innovative.
        let residuals: Vec<(usize, CodedVector)> = group
            .iter()
            .map(|&r| (r, input.spaces[r].reduce(&w, field)))
            .collect();
        if residuals.iter().all(|(_, res)| !res.is_zero()) {
            continue;
        }
        // Any nonzero coefficient serves the receivers that forced the
        // inclusion (and lets them deliver u). For the rest of the group the
        // one value folding the sum back into their span is excluded.
        let mut forbidden = [false; 256];
        forbidden[0] = true;
        for (r, res) in &residuals {
            if res.is_zero() {
                continue;
            }
            let unit_res = input.spaces[*r].reduce(&CodedVector::unit(u), field);
            debug_assert!(!unit_res.is_zero(), "next-needed packet already decoded");
            if let Some(c) = parallel_factor(res, &unit_res, field) {
                forbidden[c.value() as usize] = true;
            }
        }
        let coeff = (1..order)
            .map(|v| FieldElement(v as u8))
            .find(|c| !forbidden[c.value() as usize])
            .expect("field of order >= R always admits a coefficient");
        w.set_coeff(u, coeff);
    }

    let eff = effective_end(input);
    debug_assert!(w.max_index().unwrap_or(0) <= eff);
    finish(w, eff, input, 1)
}

pub fn encode_rlnc(input: &CodingInput, rng: &mut dyn RngCore) -> CodingOutput {
    let field = input.field;
    let order = field.order();
    let incomplete = input.incomplete();
    assert!(!incomplete.is_empty(), "RLNC requires an incomplete receiver");
    let len = input.transmission_list_size();
    assert!(len > 0, "incomplete receivers imply a nonempty queue");

    let mut draws = 0u32;
    let vector = loop {
        draws += 1;
        assert!(draws <= MAX_REDRAWS, "RLNC redraw cap exceeded");
        let mut coeffs = Vec::with_capacity(len);
        for _ in 0..len {
            coeffs.push(FieldElement(rng.random_range(0..order) as u8));
        }
        let mut v = CodedVector::zero();
        for (k, &c) in coeffs.iter().enumerate() {
            if !c.is_zero() {
                v.set_coeff(input.window_start + k + 1, c);
            }
        }
        if incomplete
            .iter()
            .all(|&r| input.spaces[r].is_innovative(&v, field))
        {
            break v;
        }
    };

    // The effective list drops the newest packet exactly when its coefficient
    // came out zero.
    let eff = if vector.coeff(input.a_total).is_zero() {
        input.a_total - 1
    } else {
        input.a_total
    };
    finish(vector, eff, input, draws)
}

fn finish(vector: CodedVector, eff: usize, input: &CodingInput, redraws: u32) -> CodingOutput {
    let coded_packet_count = vector.support_len();
    debug_assert!(coded_packet_count >= 1);
    CodingOutput {
        coded_packet_count,
        effective_end: eff,
        effective_list_size: eff.saturating_sub(input.window_start),
        vector,
        redraws,
    }
}

/// The unique nonzero c with a == c * b, if any.
fn parallel_factor(
    a: &CodedVector,
    b: &CodedVector,
    ctx: &FieldContext,
) -> Option<FieldElement> {
    let la = a.leading_index()?;
    let lb = b.leading_index()?;
    if la != lb {
        return None;
    }
    let c = ctx.div(a.coeff(la), b.coeff(lb)).expect("leading coeffs nonzero");
    let mut scaled = b.clone();
    scaled.scale(c, ctx);
    (*a == scaled).then_some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn gf(m: u32) -> FieldContext {
        FieldContext::new(m).unwrap()
    }

    fn space(ctx: &FieldContext, rows: &[&[u8]]) -> KnowledgeSpace {
        let mut s = KnowledgeSpace::new();
        for r in rows {
            assert!(s.insert(&CodedVector::from_dense(r), ctx));
        }
        s
    }

    #[test]
    fn complete_receivers_examples() {
        let ctx = gf(1);
        let spaces = vec![space(&ctx, &[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]), space(&ctx, &[&[1, 1, 0], &[0, 1, 1]])];
        let input = CodingInput { a_total: 3, window_start: 0, spaces: &spaces, field: &ctx };
        assert_eq!(complete_receivers(&input), vec![0]);

        let empty_q = CodingInput { a_total: 0, window_start: 0, spaces: &spaces[..0], field: &ctx };
        assert!(complete_receivers(&empty_q).is_empty());

        let both = vec![space(&ctx, &[&[1]]), space(&ctx, &[&[1]])];
        let input = CodingInput { a_total: 1, window_start: 0, spaces: &both, field: &ctx };
        assert_eq!(complete_receivers(&input), vec![0, 1]);
    }

    #[test]
    fn scheme_a_single_receiver_sends_oldest_unseen_uncoded() {
        let ctx = gf(1);
        let spaces = vec![space(&ctx, &[&[1, 0, 0], &[0, 1, 0]])];
        let input = CodingInput { a_total: 3, window_start: 0, spaces: &spaces, field: &ctx };
        let out = encode_scheme_a(&input);
        assert_eq!(out.vector, CodedVector::unit(3));
        assert_eq!(out.coded_packet_count, 1);
    }

    #[test]
    fn scheme_a_shared_oldest_unseen_is_served_once() {
        let ctx = gf(1);
        let spaces = vec![KnowledgeSpace::new(), KnowledgeSpace::new()];
        let input = CodingInput { a_total: 2, window_start: 0, spaces: &spaces, field: &ctx };
        let out = encode_scheme_a(&input);
        assert_eq!(out.vector, CodedVector::unit(1));
    }

    #[test]
    fn scheme_a_codes_two_unseen_packets_when_needed() {
        let ctx = gf(1);
        // rx0 empty (oldest unseen 1); rx1 holds e1 (oldest unseen 2):
        // e1 alone is not innovative to rx1, so p2 joins the combination.
        let spaces = vec![KnowledgeSpace::new(), space(&ctx, &[&[1]])];
        let input = CodingInput { a_total: 2, window_start: 0, spaces: &spaces, field: &ctx };
        let out = encode_scheme_a(&input);
        assert_eq!(out.vector, CodedVector::from_dense(&[1, 1]));
        assert_eq!(out.effective_list_size, 2);
        // Both receivers see their oldest unseen packet on reception.
        for (r, unseen) in [(0usize, 1usize), (1, 2)] {
            let mut probe = spaces[r].clone();
            assert!(probe.insert(&out.vector, &ctx));
            assert!(probe.seen_set().contains(&unseen));
        }
    }

    #[test]
    fn scheme_a_effective_list_size_formula() {
        let ctx = gf(2);
        let spaces = vec![
            space(&ctx, &[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]),
            space(&ctx, &[&[1, 1, 0]]),
        ];
        // |V_s| = 5, max rank = 3 -> effective list covers packets 1..=4.
        let input = CodingInput { a_total: 5, window_start: 0, spaces: &spaces, field: &ctx };
        let out = encode_scheme_a(&input);
        assert_eq!(out.effective_list_size, 4);
        assert!(out.vector.max_index().unwrap() <= 4);
    }

    #[test]
    fn scheme_b_shared_next_needed_goes_uncoded() {
        let ctx = gf(2);
        let prefix: Vec<&[u8]> = vec![&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, 1]];
        let spaces = vec![space(&ctx, &prefix), space(&ctx, &prefix)];
        let input = CodingInput { a_total: 5, window_start: 0, spaces: &spaces, field: &ctx };
        let out = encode_scheme_b(&input);
        assert_eq!(out.vector, CodedVector::unit(5));
    }

    #[test]
    fn scheme_b_skips_older_packet_when_newest_serves_all() {
        let ctx = gf(1);
        // rx0 next-needed p2 (holds e1); rx1 next-needed p1 (empty). e2 is
        // already innovative to rx1, so p1 is not added.
        let spaces = vec![space(&ctx, &[&[1]]), KnowledgeSpace::new()];
        let input = CodingInput { a_total: 2, window_start: 0, spaces: &spaces, field: &ctx };
        let out = encode_scheme_b(&input);
        assert_eq!(out.vector, CodedVector::unit(2));
    }

    #[test]
    fn scheme_b_adds_older_packet_when_forced() {
        let ctx = gf(1);
        // rx1 holds e2, so e2 alone is useless to it; p1 must join.
        let spaces = vec![space(&ctx, &[&[1]]), space(&ctx, &[&[0, 1]])];
        let input = CodingInput { a_total: 2, window_start: 0, spaces: &spaces, field: &ctx };
        let out = encode_scheme_b(&input);
        assert_eq!(out.vector, CodedVector::from_dense(&[1, 1]));
        // rx1 can deliver p1 from it.
        assert!(spaces[1].delivery_test(&out.vector, 1, &ctx));
    }

    #[test]
    fn scheme_b_removing_any_included_packet_breaks_innovation() {
        let ctx = gf(2);
        // Three receivers with staggered progress force a 2-packet combination.
        let spaces = vec![
            space(&ctx, &[&[1, 0, 0], &[0, 1, 0]]), // next-needed 3
            space(&ctx, &[&[0, 1, 0]]),             // next-needed 1, holds e2
            space(&ctx, &[&[0, 0, 1]]),             // next-needed 1, holds e3
        ];
        let input = CodingInput { a_total: 3, window_start: 0, spaces: &spaces, field: &ctx };
        let out = encode_scheme_b(&input);
        for r in 0..3 {
            assert!(spaces[r].is_innovative(&out.vector, &ctx), "receiver {r}");
        }
        // Zeroing any included coefficient must make the vector dependent for
        // at least one receiver mapped to that packet.
        for (idx, _) in out.vector.support().collect::<Vec<_>>() {
            let mut crippled = out.vector.clone();
            crippled.set_coeff(idx, FieldElement::ZERO);
            assert!(
                (0..3).any(|r| {
                    let needed = spaces[r].delivered_prefix() + 1;
                    needed == idx && !spaces[r].is_innovative(&crippled, &ctx)
                }),
                "packet {idx} was not necessary"
            );
        }
    }

    #[test]
    fn rlnc_single_choice_field() {
        let ctx = gf(1);
        let spaces = vec![KnowledgeSpace::new()];
        let input = CodingInput { a_total: 1, window_start: 0, spaces: &spaces, field: &ctx };
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let out = encode_rlnc(&input, &mut rng);
        assert_eq!(out.vector, CodedVector::unit(1));
    }

    #[test]
    fn rlnc_accepts_only_innovative_draws() {
        let ctx = gf(1);
        let spaces = vec![space(&ctx, &[&[1, 1]])];
        let input = CodingInput { a_total: 2, window_start: 0, spaces: &spaces, field: &ctx };
        let accepted_a = CodedVector::from_dense(&[1, 0]);
        let accepted_b = CodedVector::from_dense(&[0, 1]);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let out = encode_rlnc(&input, &mut rng);
            assert!(out.vector == accepted_a || out.vector == accepted_b);
        }
    }

    #[test]
    fn rlnc_innovation_guarantee_across_random_states() {
        let ctx = gf(2);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let spaces = vec![
            space(&ctx, &[&[1, 2, 0, 1]]),
            space(&ctx, &[&[0, 1, 1, 0], &[0, 0, 1, 3]]),
            KnowledgeSpace::new(),
        ];
        let input = CodingInput { a_total: 4, window_start: 0, spaces: &spaces, field: &ctx };
        for _ in 0..50 {
            let out = encode(CodingScheme::Rlnc, &input, &mut rng);
            for s in &spaces {
                assert!(s.is_innovative(&out.vector, &ctx));
            }
        }
    }

    #[test]
    fn all_schemes_satisfy_innovation_guarantee_on_staggered_states() {
        let ctx = gf(2);
        let spaces = vec![
            space(&ctx, &[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 0]]),
            space(&ctx, &[&[1, 1, 0, 0], &[0, 0, 1, 2]]),
            space(&ctx, &[&[2, 1, 0, 0]]),
            KnowledgeSpace::new(),
        ];
        let input = CodingInput { a_total: 4, window_start: 0, spaces: &spaces, field: &ctx };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for scheme in [CodingScheme::SchemeA, CodingScheme::SchemeB, CodingScheme::Rlnc] {
            let out = encode(scheme, &input, &mut rng);
            for (r, s) in spaces.iter().enumerate() {
                assert!(
                    s.is_innovative(&out.vector, &ctx),
                    "{:?} not innovative for receiver {r}",
                    scheme
                );
            }
        }
    }
}
