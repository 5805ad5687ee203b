//! Random instance generator.
//!
//! Random draws come from one ChaCha stream seeded by `params.seed`, consumed
//! in this fixed order:
//!
//! 1. per-country LSP subset weights (only for [`LspAssignment::LogNormal`]),
//! 2. merchant sizes, merchants by ascending id,
//! 3. Watts-Strogatz rewiring over LSPs by ascending id,
//! 4. per-LSP attachment weights, LSPs by ascending id,
//! 5. end-user attachment draws, end users by ascending id.
//!
//! Channel capacities never influence the stream, so two instances that differ
//! only in routing capacities share the same graph.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;

use super::{Channel, ChannelId, LspAssignment, MerchantSize, Node, NodeId, Role, Topology, TopologyParams};
use crate::units::Money;
use crate::TopologyError;

/// Parameters of the 1:1000 euro-area model: three countries sized like
/// Cyprus, Finland and Italy, 300k citizens, one merchant per 100 citizens and
/// one LSP per 10k.
pub fn scaled_europe_params(lsp_lsp_capacity: Money, cb_lsp_capacity: Money) -> TopologyParams {
    TopologyParams {
        num_countries: 3,
        country_populations: vec![1_000_000, 6_000_000, 60_000_000],
        total_citizens: 300_000,
        citizens_per_merchant: 100,
        citizens_per_lsp: 10_000,
        lsp_assignment: LspAssignment::Proportional,
        cb_clique_capacity: Money::euros(500_000_000),
        cb_lsp_capacity,
        lsp_lsp_capacity,
        ws_degree: 4,
        ws_rewire_prob: 0.1,
        lognormal_mu: 0.0,
        lognormal_sigma: 1.0,
        citizen_cap: Money::euros(3_000),
        merchant_caps: [Money::euros(5_000), Money::euros(50_000), Money::euros(500_000)],
        merchant_size_shares: [0.80, 0.15, 0.05],
        citizen_initial_balance_fraction: 0.5,
        merchant_initial_balance_fraction: 0.0,
        seed: 1,
    }
}

/// Largest-remainder apportionment of `total` by `weights`, giving every
/// country whose entry in `min_each` is set at least that many units.
///
/// Countries whose quota falls below their minimum are pinned to it and the
/// rest is re-apportioned among the others, so the total is always preserved
/// (as long as the minimums fit).
pub fn apportion(total: u64, weights: &[f64], min_each: &[u64]) -> Vec<u64> {
    let n = weights.len();
    let mut out = vec![0u64; n];
    let mut pinned = vec![false; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
        let pinned_sum: u64 = (0..n).filter(|&i| pinned[i]).map(|i| out[i]).sum();
        let remaining = total.saturating_sub(pinned_sum);
        let wsum: f64 = free.iter().map(|&i| weights[i]).sum();
        if free.is_empty() {
            return out;
        }
        let mut rems = Vec::with_capacity(free.len());
        let mut assigned = 0u64;
        for &i in &free {
            let quota = if wsum > 0.0 { remaining as f64 * weights[i] / wsum } else { 0.0 };
            let fl = quota.floor() as u64;
            out[i] = fl;
            assigned += fl;
            rems.push((quota - fl as f64, i));
        }
        // Largest remainder first; ties go to the lower index.
        rems.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut left = remaining.saturating_sub(assigned);
        for &(_, i) in rems.iter().cycle().take(rems.len() * 2) {
            if left == 0 {
                break;
            }
            if weights[i] > 0.0 || wsum == 0.0 {
                out[i] += 1;
                left -= 1;
            }
        }
        let mut changed = false;
        for &i in &free {
            if out[i] < min_each[i] {
                out[i] = min_each[i];
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Watts-Strogatz small-world edge set over `n` vertices: a ring lattice
/// where each vertex links to its `k/2` nearest neighbors on each side, then
/// every lattice edge `(u, u+j)` is rewired to `(u, w)` with probability `p`,
/// `w` uniform and avoiding self-loops and duplicate edges.
///
/// Returns undirected edges as `(min, max)` pairs in ascending order.
pub fn watts_strogatz_edges<R: Rng>(n: usize, k: usize, p: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let key = |u: usize, v: usize| if u < v { (u, v) } else { (v, u) };
    if n < 2 || k == 0 {
        return Vec::new();
    }
    let half = k / 2;
    for j in 1..=half {
        for u in 0..n {
            let v = (u + j) % n;
            if u != v {
                edges.insert(key(u, v));
            }
        }
    }
    let mut degree = vec![0usize; n];
    for &(u, v) in &edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    for j in 1..=half {
        for u in 0..n {
            let v = (u + j) % n;
            if rng.gen::<f64>() >= p {
                continue;
            }
            if degree[u] >= n - 1 || !edges.contains(&key(u, v)) {
                continue;
            }
            let mut w = rng.gen_range(0..n);
            while w == u || edges.contains(&key(u, w)) {
                w = rng.gen_range(0..n);
            }
            edges.remove(&key(u, v));
            degree[v] -= 1;
            edges.insert(key(u, w));
            degree[w] += 1;
        }
    }
    edges.into_iter().collect()
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn check_params(p: &TopologyParams) -> Result<(), TopologyError> {
    let bad = |msg: String| Err(TopologyError::InvalidParams(msg));
    if p.num_countries == 0 {
        return bad("num_countries must be at least 1".into());
    }
    if p.num_countries > u16::MAX as usize {
        return bad("too many countries".into());
    }
    if p.country_populations.len() != p.num_countries {
        return bad(format!(
            "country_populations has {} entries, expected {}",
            p.country_populations.len(),
            p.num_countries
        ));
    }
    if p.citizens_per_merchant == 0 || p.citizens_per_lsp == 0 {
        return bad("citizens_per_merchant and citizens_per_lsp must be positive".into());
    }
    let share_sum: f64 = p.merchant_size_shares.iter().sum();
    if p.merchant_size_shares.iter().any(|s| !(0.0..=1.0).contains(s)) || (share_sum - 1.0).abs() > 1e-9 {
        return bad(format!("merchant_size_shares must be fractions summing to 1, got {share_sum}"));
    }
    for (name, f) in [
        ("citizen_initial_balance_fraction", p.citizen_initial_balance_fraction),
        ("merchant_initial_balance_fraction", p.merchant_initial_balance_fraction),
        ("ws_rewire_prob", p.ws_rewire_prob),
    ] {
        if !(0.0..=1.0).contains(&f) {
            return bad(format!("{name} must lie in [0, 1], got {f}"));
        }
    }
    if !p.ws_degree.is_multiple_of(2) {
        return bad(format!("Watts-Strogatz degree k must be even, got {}", p.ws_degree));
    }
    if !(p.lognormal_sigma >= 0.0) || !p.lognormal_mu.is_finite() {
        return bad("log-normal parameters must be finite with sigma >= 0".into());
    }
    Ok(())
}

/// Builds a random SH-PCN instance.
///
/// Node ids are dense and grouped: central banks (one per country), then LSPs,
/// merchants and citizens, each group ordered by country.
pub fn generate_topology(params: &TopologyParams) -> Result<Topology, TopologyError> {
    check_params(params)?;
    let nc = params.num_countries;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let lognormal = LogNormal::new(params.lognormal_mu, params.lognormal_sigma)
        .map_err(|e| TopologyError::InvalidParams(format!("log-normal: {e}")))?;

    let pop: Vec<f64> = params.country_populations.iter().map(|&x| x as f64).collect();
    let zero = vec![0u64; nc];
    let citizens = apportion(params.total_citizens, &pop, &zero);
    let total_merchants = (params.total_citizens as f64 / params.citizens_per_merchant as f64).round() as u64;
    let merchants = apportion(total_merchants, &pop, &zero);
    let total_lsps = (params.total_citizens as f64 / params.citizens_per_lsp as f64).round() as u64;

    let lsps = match params.lsp_assignment {
        LspAssignment::Proportional => {
            let min: Vec<u64> = params.country_populations.iter().map(|&x| u64::from(x > 0)).collect();
            let total = total_lsps.max(min.iter().sum());
            apportion(total, &pop, &min)
        }
        LspAssignment::LogNormal => {
            let w: Vec<f64> = (0..nc).map(|_| lognormal.sample(&mut rng)).collect();
            apportion(total_lsps, &w, &zero)
        }
    };
    for c in 0..nc {
        if lsps[c] == 0 && citizens[c] + merchants[c] > 0 {
            return Err(TopologyError::InvalidParams(format!(
                "country {c} has {} end users but no LSPs",
                citizens[c] + merchants[c]
            )));
        }
    }
    let n_lsp: u64 = lsps.iter().sum();
    if params.ws_degree > 0 && params.ws_degree as u64 >= n_lsp {
        return Err(TopologyError::InvalidParams(format!(
            "Watts-Strogatz degree k={} must be smaller than the number of LSPs ({n_lsp})",
            params.ws_degree
        )));
    }

    let mut nodes: Vec<Node> = Vec::new();
    let push = |nodes: &mut Vec<Node>, role: Role, country: usize| {
        let id = NodeId(nodes.len() as u32);
        nodes.push(Node { id, tier: role.tier(), role, country: country as u16 });
        id
    };
    let cb_ids: Vec<NodeId> = (0..nc).map(|c| push(&mut nodes, Role::CentralBank, c)).collect();
    let mut lsp_ids_by_country: Vec<Vec<NodeId>> = vec![Vec::new(); nc];
    for c in 0..nc {
        for _ in 0..lsps[c] {
            lsp_ids_by_country[c].push(push(&mut nodes, Role::Lsp, c));
        }
    }
    let size_index = WeightedIndex::new(params.merchant_size_shares)
        .map_err(|e| TopologyError::InvalidParams(format!("merchant_size_shares: {e}")))?;
    for (c, &n) in merchants.iter().enumerate() {
        for _ in 0..n {
            let size = MerchantSize::ALL[size_index.sample(&mut rng)];
            push(&mut nodes, Role::Merchant(size), c);
        }
    }
    for (c, &n) in citizens.iter().enumerate() {
        for _ in 0..n {
            push(&mut nodes, Role::Citizen, c);
        }
    }

    let mut channels: Vec<Channel> = Vec::new();
    let add_channel = |channels: &mut Vec<Channel>, x: NodeId, y: NodeId, cap: Money, first_share: Money| {
        let (a, b, bal_a) = if x < y { (x, y, first_share) } else { (y, x, cap - first_share) };
        channels.push(Channel {
            id: ChannelId(channels.len() as u32),
            a,
            b,
            capacity: cap,
            balance_a: bal_a,
            balance_b: cap - bal_a,
            locked: Money::ZERO,
        });
    };
    let half = |cap: Money| Money(cap.0 / 2);

    for i in 0..nc {
        for j in i + 1..nc {
            let cap = params.cb_clique_capacity;
            add_channel(&mut channels, cb_ids[i], cb_ids[j], cap, half(cap));
        }
    }
    for c in 0..nc {
        for &l in &lsp_ids_by_country[c] {
            let cap = params.cb_lsp_capacity;
            add_channel(&mut channels, cb_ids[c], l, cap, half(cap));
        }
    }
    let all_lsps: Vec<NodeId> = lsp_ids_by_country.iter().flatten().copied().collect();
    for (u, v) in watts_strogatz_edges(all_lsps.len(), params.ws_degree, params.ws_rewire_prob, &mut rng) {
        let cap = params.lsp_lsp_capacity;
        add_channel(&mut channels, all_lsps[u], all_lsps[v], cap, half(cap));
    }

    let lsp_weights: Vec<Vec<f64>> = lsp_ids_by_country
        .iter()
        .map(|ids| ids.iter().map(|_| lognormal.sample(&mut rng)).collect())
        .collect();
    let pickers: Vec<Option<WeightedIndex<f64>>> =
        lsp_weights.iter().map(|w| WeightedIndex::new(w).ok()).collect();
    let first_eu = cb_ids.len() + all_lsps.len();
    for node in &nodes[first_eu..] {
        let c = node.country as usize;
        let picker = pickers[c].as_ref().ok_or_else(|| {
            TopologyError::InvalidParams(format!("country {c} has end users but no LSP weights"))
        })?;
        let lsp = lsp_ids_by_country[c][picker.sample(&mut rng)];
        let (cap, frac) = match node.role {
            Role::Citizen => (params.citizen_cap, params.citizen_initial_balance_fraction),
            Role::Merchant(s) => (params.merchant_caps[s.index()], params.merchant_initial_balance_fraction),
            _ => unreachable!("only end users follow the first LSP"),
        };
        let eu_share = Money((frac * cap.0 as f64).round() as u64).min(cap);
        // The LSP id is always lower, so it takes the `a` side.
        add_channel(&mut channels, lsp, node.id, cap, cap - eu_share);
    }

    Ok(Topology { nodes, channels, params: Some(params.clone()) })
}
