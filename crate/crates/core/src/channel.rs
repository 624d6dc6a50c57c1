//! Finite-rate channels and the channel/estimator joint statistics.
//!
//! Rates are handled by rank everywhere inside the crate: rank `k` is the
//! position of a rate in the strictly increasing [`RateSpace`], so "the
//! transmission at rate `r` succeeds" is the exact integer test
//! `rank(r) <= rank(C)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability-sum tolerance for analytically constructed tables.
pub const EXACT_SUM_TOL: f64 = 1e-12;
/// Probability-sum tolerance for Monte-Carlo tables and tables read from disk.
pub const SAMPLED_SUM_TOL: f64 = 1e-9;

/// Strictly increasing, strictly positive transmission rates (packets/slot).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RateSpace {
    rates: Vec<f64>,
}

impl RateSpace {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidRates("rate space is empty".into()));
        }
        if let Some(bad) = rates.iter().find(|r| !r.is_finite() || **r <= 0.0) {
            return Err(Error::InvalidRates(format!("rate {bad} is not a positive finite number")));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRates("rates must be strictly increasing".into()));
        }
        Ok(Self { rates })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate(&self, rank: usize) -> f64 {
        self.rates[rank]
    }

    pub fn max_rate(&self) -> f64 {
        self.rates[self.rates.len() - 1]
    }

    /// Rank of a rate that is exactly a member of the space.
    pub fn rank_of(&self, rate: f64) -> Option<usize> {
        self.rates.iter().position(|&r| r == rate)
    }

    /// Rank of the largest rate `<= x`; values below the lowest level map to rank 0.
    pub fn quantize_down(&self, x: f64) -> usize {
        self.rates.partition_point(|&r| r <= x).saturating_sub(1)
    }

    /// Smallest positive integer `m` such that every `m * rate` is an integer
    /// (to 1e-9 absolute). Queue accounting runs in units of `1/m` packets.
    pub fn unit_scale(&self) -> Result<u64> {
        const MAX_SCALE: u64 = 1_000_000;
        (1..=MAX_SCALE)
            .find(|&m| self.rates.iter().all(|&r| is_integral(r * m as f64)))
            .ok_or_else(|| {
                Error::InvalidRates(format!(
                    "rates {:?} have no integer packet scale up to {MAX_SCALE}",
                    self.rates
                ))
            })
    }

    /// `round(m * rate)` as an integer packet count.
    pub fn scaled(&self, rank: usize, scale: u64) -> u64 {
        (self.rates[rank] * scale as f64).round() as u64
    }
}

fn is_integral(x: f64) -> bool {
    (x - x.round()).abs() <= 1e-9
}

impl<'de> Deserialize<'de> for RateSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rates = Vec::<f64>::deserialize(d)?;
        RateSpace::new(rates).map_err(serde::de::Error::custom)
    }
}

/// Per-user joint probability tables `P(C = c, Ĉ = ĉ)` over a shared rate space.
///
/// Each table is stored row-major with the actual-state rank as row and the
/// estimate rank as column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointStatisticsDoc", into = "JointStatisticsDoc")]
pub struct JointStatistics {
    rates: RateSpace,
    tables: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointStatisticsDoc {
    rates: Vec<f64>,
    users: Vec<UserJointDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserJointDoc {
    joint: Vec<Vec<f64>>,
}

impl TryFrom<JointStatisticsDoc> for JointStatistics {
    type Error = Error;

    fn try_from(doc: JointStatisticsDoc) -> Result<Self> {
        let rates = RateSpace::new(doc.rates)?;
        let tables = doc.users.into_iter().map(|u| u.joint).collect();
        JointStatistics::with_tolerance(rates, tables, SAMPLED_SUM_TOL)
    }
}

impl From<JointStatistics> for JointStatisticsDoc {
    fn from(js: JointStatistics) -> Self {
        let n = js.rates.len();
        let users = js
            .tables
            .iter()
            .map(|t| UserJointDoc { joint: t.chunks(n).map(<[f64]>::to_vec).collect() })
            .collect();
        JointStatisticsDoc { rates: js.rates.rates, users }
    }
}

impl JointStatistics {
    /// Builds statistics from per-user `|S|×|S|` tables (`joint[c][ĉ]`).
    pub fn new(rates: RateSpace, tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::with_tolerance(rates, tables, EXACT_SUM_TOL)
    }

    pub fn with_tolerance(rates: RateSpace, tables: Vec<Vec<Vec<f64>>>, tol: f64) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidStatistics("no users".into()));
        }
        let n = rates.len();
        let mut flat = Vec::with_capacity(tables.len());
        for (user, table) in tables.into_iter().enumerate() {
            if table.len() != n || table.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidStatistics(format!(
                    "user {user}: joint table must be {n}x{n}"
                )));
            }
            let t: Vec<f64> = table.into_iter().flatten().collect();
            if let Some(bad) = t.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidStatistics(format!(
                    "user {user}: entry {bad} is not a probability"
                )));
            }
            let sum: f64 = t.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidStatistics(format!(
                    "user {user}: joint table sums to {sum}"
                )));
            }
            flat.push(t);
        }
        Ok(Self { rates, tables: flat })
    }

    /// Two-level channel `{low, high}` with `P(C = high) = p_high` and a
    /// symmetric estimator that reports the true level with probability
    /// `accuracy`, replicated for `users` users.
    pub fn two_level(low: f64, high: f64, p_high: f64, accuracy: f64, users: usize) -> Result<Self> {
        let rates = RateSpace::new(vec![low, high])?;
        let p_low = 1.0 - p_high;
        let table = vec![
            vec![p_low * accuracy, p_low * (1.0 - accuracy)],
            vec![p_high * (1.0 - accuracy), p_high * accuracy],
        ];
        Self::new(rates, vec![table; users])
    }

    /// Estimator that always reports the true state; `dist[c]` is `P(C = c)`.
    pub fn perfect(rates: RateSpace, dist: &[f64], users: usize) -> Result<Self> {
        let n = rates.len();
        let mut table = vec![vec![0.0; n]; n];
        for (c, &p) in dist.iter().enumerate() {
            table[c][c] = p;
        }
        Self::new(rates, vec![table; users])
    }

    /// Estimate drawn independently of the state.
    pub fn independent(rates: RateSpace, state: &[f64], estimate: &[f64], users: usize) -> Result<Self> {
        let table: Vec<Vec<f64>> =
            state.iter().map(|&pc| estimate.iter().map(|&pe| pc * pe).collect()).collect();
        Self::new(rates, vec![table; users])
    }

    /// Same statistics for `users` users (draws stay independent across users).
    pub fn replicate(&self, users: usize) -> Self {
        Self { rates: self.rates.clone(), tables: vec![self.tables[0].clone(); users] }
    }

    pub fn rates(&self) -> &RateSpace {
        &self.rates
    }

    pub fn n_users(&self) -> usize {
        self.tables.len()
    }

    pub fn joint(&self, user: usize, state: usize, estimate: usize) -> f64 {
        self.tables[user][state * self.rates.len() + estimate]
    }

    /// Row-major `joint[c][ĉ]` of one user.
    pub fn table(&self, user: usize) -> &[f64] {
        &self.tables[user]
    }

    pub fn sampler(&self) -> JointSampler {
        JointSampler::new(self)
    }

    pub fn success_table(&self) -> Result<SuccessTable> {
        derive_success_table(self)
    }
}

/// Per-user conditional success probabilities `P(C ≥ r | Ĉ = ĉ)` and estimate marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessTable {
    rates: RateSpace,
    users: Vec<UserSuccess>,
}

#[derive(Clone, Debug, PartialEq)]
struct UserSuccess {
    marginal: Vec<f64>,
    /// Row-major `p[ĉ][r]`; rows outside the domain are left at zero.
    cond: Vec<f64>,
    domain: Vec<usize>,
}

/// Conditions each user's joint table on the estimate.
pub fn derive_success_table(js: &JointStatistics) -> Result<SuccessTable> {
    let n = js.rates.len();
    let mut users = Vec::with_capacity(js.n_users());
    for user in 0..js.n_users() {
        let mut marginal = vec![0.0; n];
        let mut cond = vec![0.0; n * n];
        let mut domain = Vec::new();
        for est in 0..n {
            // Suffix sums over the state rank: tail[r] = P(C ≥ r, Ĉ = est).
            let mut tail = vec![0.0; n];
            let mut acc = 0.0;
            for c in (0..n).rev() {
                acc += js.joint(user, c, est);
                tail[c] = acc;
            }
            marginal[est] = acc;
            if acc > 0.0 {
                domain.push(est);
                for r in 0..n {
                    cond[est * n + r] = tail[r] / acc;
                }
            }
        }
        if domain.is_empty() {
            return Err(Error::InvalidStatistics(format!("user {user}: table sums to zero")));
        }
        users.push(UserSuccess { marginal, cond, domain });
    }
    Ok(SuccessTable { rates: js.rates.clone(), users })
}

impl SuccessTable {
    pub fn rates(&self) -> &RateSpace {
        &self.rates
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn marginal(&self, user: usize, estimate: usize) -> f64 {
        self.users[user].marginal[estimate]
    }

    pub fn marginals(&self, user: usize) -> &[f64] {
        &self.users[user].marginal
    }

    /// Estimate ranks with positive marginal probability.
    pub fn domain(&self, user: usize) -> &[usize] {
        &self.users[user].domain
    }

    pub fn in_domain(&self, user: usize, estimate: usize) -> bool {
        estimate < self.rates.len() && self.users[user].marginal[estimate] > 0.0
    }

    /// `P(C_user ≥ rate | Ĉ_user = estimate)`.
    pub fn success(&self, user: usize, estimate: usize, rate: usize) -> Result<f64> {
        if !self.in_domain(user, estimate) {
            return Err(Error::Domain { user, estimate });
        }
        Ok(self.users[user].cond[estimate * self.rates.len() + rate])
    }

    /// The conditional row `r ↦ P(C ≥ r | Ĉ = estimate)`.
    pub fn row(&self, user: usize, estimate: usize) -> Result<&[f64]> {
        if !self.in_domain(user, estimate) {
            return Err(Error::Domain { user, estimate });
        }
        let n = self.rates.len();
        Ok(&self.users[user].cond[estimate * n..(estimate + 1) * n])
    }
}

/// Probability of observing the estimate vector `estimates`: `Π_i P(Ĉ_i = ĉ_i)`.
///
/// Ranks outside the rate space are domain errors; in-range ranks with zero
/// marginal give probability 0.
pub fn estimate_vector_probability(st: &SuccessTable, estimates: &[usize]) -> Result<f64> {
    if estimates.len() != st.n_users() {
        return Err(Error::UnsupportedDimension { expected: st.n_users(), actual: estimates.len() });
    }
    let mut prob = 1.0;
    for (user, &est) in estimates.iter().enumerate() {
        if est >= st.rates.len() {
            return Err(Error::Domain { user, estimate: est });
        }
        prob *= st.marginal(user, est);
    }
    Ok(prob)
}

/// One slot's realised channel: actual state and estimate rank per user.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelDraw {
    pub states: Vec<usize>,
    pub estimates: Vec<usize>,
}

/// Inverse-CDF sampler over each user's joint table.
#[derive(Clone, Debug)]
pub struct JointSampler {
    n_rates: usize,
    cdfs: Vec<Vec<f64>>,
}

impl JointSampler {
    pub fn new(js: &JointStatistics) -> Self {
        let cdfs = js
            .tables
            .iter()
            .map(|t| {
                let mut acc = 0.0;
                t.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { n_rates: js.rates.len(), cdfs }
    }

    pub fn n_users(&self) -> usize {
        self.cdfs.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelDraw {
        let mut draw = ChannelDraw::default();
        self.sample_into(rng, &mut draw);
        draw
    }

    /// Overwrites `draw` with a fresh slot, one uniform per user.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, draw: &mut ChannelDraw) {
        draw.states.resize(self.cdfs.len(), 0);
        draw.estimates.resize(self.cdfs.len(), 0);
        for (user, cdf) in self.cdfs.iter().enumerate() {
            let total = cdf[cdf.len() - 1];
            let u = rng.random::<f64>() * total;
            let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            draw.states[user] = cell / self.n_rates;
            draw.estimates[user] = cell % self.n_rates;
        }
    }
}

/// Draws one slot from `js`. Builds a sampler per call; hot loops should keep a [`JointSampler`].
pub fn sample_slot<R: Rng + ?Sized>(js: &JointStatistics, rng: &mut R) -> ChannelDraw {
    JointSampler::new(js).sample(rng)
}

/// Monte-Carlo joint statistics of a Rayleigh-faded link with an MMSE estimator.
///
/// The estimate `ĥ ~ CN(0, 1-β)` and the error `h̃ ~ CN(0, β)` are drawn
/// independently, `h = ĥ + h̃ ~ CN(0, 1)`. The true rate `log2(1 + snr|h|²)`
/// and the estimated rate `log2(1 + snr|ĥ|²)` are quantized down onto
/// `quantizer` (values under the lowest level land on the lowest level).
/// Returns single-user statistics; see [`JointStatistics::replicate`].
pub fn rayleigh_mmse_statistics<R: Rng + ?Sized>(
    snr: f64,
    beta: f64,
    quantizer: &RateSpace,
    sample_count: usize,
    rng: &mut R,
) -> Result<JointStatistics> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::Parameter(format!("mean SNR must be positive, got {snr}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Parameter(format!("estimation-error variance must lie in (0,1), got {beta}")));
    }
    if sample_count < 10_000 {
        return Err(Error::Parameter(format!("sample_count must be at least 10^4, got {sample_count}")));
    }
    let n = quantizer.len();
    let mut counts = vec![0u64; n * n];
    let est_sd = ((1.0 - beta) / 2.0).sqrt();
    let err_sd = (beta / 2.0).sqrt();
    for _ in 0..sample_count {
        let est_re = est_sd * rng.sample::<f64, _>(StandardNormal);
        let est_im = est_sd * rng.sample::<f64, _>(StandardNormal);
        let err_re = err_sd * rng.sample::<f64, _>(StandardNormal);
        let err_im = err_sd * rng.sample::<f64, _>(StandardNormal);
        let h_re = est_re + err_re;
        let h_im = est_im + err_im;
        let true_rate = (1.0 + snr * (h_re * h_re + h_im * h_im)).log2();
        let est_rate = (1.0 + snr * (est_re * est_re + est_im * est_im)).log2();
        let c = quantizer.quantize_down(true_rate);
        let e = quantizer.quantize_down(est_rate);
        counts[c * n + e] += 1;
    }
    let total = sample_count as f64;
    let table = counts
        .chunks(n)
        .map(|row| row.iter().map(|&k| k as f64 / total).collect())
        .collect();
    JointStatistics::with_tolerance(quantizer.clone(), vec![table], SAMPLED_SUM_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig1a() -> JointStatistics {
        JointStatistics::two_level(0.2, 1.0, 0.8, 0.8, 1).unwrap()
    }

    /// Brute-force conditional: enumerate every (c, ĉ) cell and count the event.
    fn brute_conditional(js: &JointStatistics, est: usize, rate: usize) -> f64 {
        let n = js.rates().len();
        let mut hit = 0.0;
        let mut all = 0.0;
        for c in 0..n {
            for e in 0..n {
                let p = js.joint(0, c, e);
                if e == est {
                    all += p;
                    if c >= rate {
                        hit += p;
                    }
                }
            }
        }
        hit / all
    }

    #[test]
    fn rate_space_validation() {
        assert!(RateSpace::new(vec![]).is_err());
        assert!(RateSpace::new(vec![1.0, 1.0]).is_err());
        assert!(RateSpace::new(vec![0.0, 1.0]).is_err());
        assert!(RateSpace::new(vec![2.0, 1.0]).is_err());
        let s = RateSpace::new(vec![0.2, 1.0]).unwrap();
        assert_eq!(s.unit_scale().unwrap(), 5);
        assert_eq!(RateSpace::new(vec![0.5, 1.5, 2.5]).unwrap().unit_scale().unwrap(), 2);
        assert!(RateSpace::new(vec![std::f64::consts::PI]).unwrap().unit_scale().is_err());
    }

    #[test]
    fn quantizes_downward() {
        let s = RateSpace::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.quantize_down(0.3), 0);
        assert_eq!(s.quantize_down(1.0), 0);
        assert_eq!(s.quantize_down(2.999), 1);
        assert_eq!(s.quantize_down(3.0), 2);
        assert_eq!(s.quantize_down(70.0), 2);
    }

    #[test]
    fn fig1a_success_table() {
        let js = fig1a();
        let st = derive_success_table(&js).unwrap();
        assert!((st.success(0, 1, 1).unwrap() - 16.0 / 17.0).abs() < 1e-15);
        assert!((st.success(0, 0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(st.success(0, 0, 0).unwrap(), 1.0);
        assert_eq!(st.success(0, 1, 0).unwrap(), 1.0);
        assert!((st.marginal(0, 0) - 0.32).abs() < 1e-15);
        assert!((st.marginal(0, 1) - 0.68).abs() < 1e-15);
        for est in 0..2 {
            for rate in 0..2 {
                let oracle = brute_conditional(&js, est, rate);
                assert!((st.success(0, est, rate).unwrap() - oracle).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn perfect_estimator_is_a_step_function() {
        let rates = RateSpace::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let js = JointStatistics::perfect(rates, &[0.1, 0.2, 0.3, 0.4], 1).unwrap();
        let st = js.success_table().unwrap();
        for est in 0..4 {
            for rate in 0..4 {
                let expected = if rate <= est { 1.0 } else { 0.0 };
                assert_eq!(st.success(0, est, rate).unwrap(), expected);
            }
        }
    }

    #[test]
    fn independent_estimate_gives_identical_rows() {
        let rates = RateSpace::new(vec![1.0, 2.0, 3.0]).unwrap();
        let state = [0.2, 0.5, 0.3];
        let js = JointStatistics::independent(rates, &state, &[0.25, 0.25, 0.5], 1).unwrap();
        let st = js.success_table().unwrap();
        let tail = [1.0, 0.8, 0.3];
        for est in 0..3 {
            for rate in 0..3 {
                assert!((st.success(0, est, rate).unwrap() - tail[rate]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_marginal_estimates_leave_the_domain() {
        let rates = RateSpace::new(vec![1.0, 2.0]).unwrap();
        let js = JointStatistics::new(rates, vec![vec![vec![0.3, 0.0], vec![0.7, 0.0]]]).unwrap();
        let st = js.success_table().unwrap();
        assert_eq!(st.domain(0), &[0]);
        assert!(matches!(st.success(0, 1, 0), Err(Error::Domain { user: 0, estimate: 1 })));
    }

    #[test]
    fn rejects_bad_tables() {
        let rates = RateSpace::new(vec![1.0, 2.0]).unwrap();
        let zero = vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]];
        assert!(matches!(
            JointStatistics::new(rates.clone(), zero),
            Err(Error::InvalidStatistics(_))
        ));
        let neg = vec![vec![vec![1.5, -0.5], vec![0.0, 0.0]]];
        assert!(JointStatistics::new(rates.clone(), neg).is_err());
        let ragged = vec![vec![vec![1.0], vec![0.0, 0.0]]];
        assert!(JointStatistics::new(rates, ragged).is_err());
    }

    #[test]
    fn estimate_vector_probability_is_a_product() {
        let st = JointStatistics::two_level(0.2, 1.0, 0.8, 0.8, 2).unwrap().success_table().unwrap();
        let p = estimate_vector_probability(&st, &[1, 1]).unwrap();
        assert!((p - 0.4624).abs() < 1e-15);
        let single = fig1a().success_table().unwrap();
        assert_eq!(estimate_vector_probability(&single, &[0]).unwrap(), single.marginal(0, 0));
        assert!(estimate_vector_probability(&st, &[2, 0]).is_err());

        let rates = RateSpace::new(vec![1.0, 2.0]).unwrap();
        let js = JointStatistics::new(rates, vec![vec![vec![0.3, 0.0], vec![0.7, 0.0]]; 2]).unwrap();
        let st = js.success_table().unwrap();
        assert_eq!(estimate_vector_probability(&st, &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_joint_always_samples_the_same_cell() {
        let rates = RateSpace::new(vec![1.0, 2.0, 3.0]).unwrap();
        let mut t = vec![vec![0.0; 3]; 3];
        t[2][1] = 1.0;
        let js = JointStatistics::new(rates, vec![t]).unwrap();
        let sampler = js.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d = sampler.sample(&mut rng);
            assert_eq!((d.states[0], d.estimates[0]), (2, 1));
        }
    }

    #[test]
    fn sampling_matches_the_joint_table() {
        let js = fig1a();
        let sampler = js.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let mut counts = [0u64; 4];
        for _ in 0..draws {
            let d = sampler.sample(&mut rng);
            counts[d.states[0] * 2 + d.estimates[0]] += 1;
        }
        let freq_11 = counts[3] as f64 / draws as f64;
        assert!((freq_11 - 0.64).abs() < 0.002, "freq {freq_11}");
        // chi-square with 3 degrees of freedom; 16.27 is the 0.999 quantile.
        let chi2: f64 = (0..4)
            .map(|cell| {
                let expected = js.table(0)[cell] * draws as f64;
                (counts[cell] as f64 - expected).powi(2) / expected
            })
            .sum();
        assert!(chi2 < 16.27, "chi2 {chi2}");
    }

    #[test]
    fn same_seed_same_draws() {
        let js = JointStatistics::two_level(0.2, 1.0, 0.8, 0.4, 3).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| sample_slot(&js, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let rates = RateSpace::new(vec![0.2, 1.0, 2.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let js = rayleigh_mmse_statistics(5.0, 0.3, &rates, 10_000, &mut rng).unwrap().replicate(2);
        let text = serde_json::to_string(&js).unwrap();
        let back: JointStatistics = serde_json::from_str(&text).unwrap();
        assert_eq!(js, back);
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["users"][1]["joint"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn json_rejects_unknown_keys_and_bad_sums() {
        let bad_key = r#"{"rates":[1.0],"users":[{"joint":[[1.0]]}],"extra":1}"#;
        assert!(serde_json::from_str::<JointStatistics>(bad_key).is_err());
        let bad_sum = r#"{"rates":[1.0,2.0],"users":[{"joint":[[0.5,0.0],[0.0,0.4]]}]}"#;
        assert!(serde_json::from_str::<JointStatistics>(bad_sum).is_err());
    }

    #[test]
    fn rayleigh_parameter_checks() {
        let rates = RateSpace::new(vec![1.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(rayleigh_mmse_statistics(50.0, 0.0, &rates, 10_000, &mut rng).is_err());
        assert!(rayleigh_mmse_statistics(50.0, 1.0, &rates, 10_000, &mut rng).is_err());
        assert!(rayleigh_mmse_statistics(-1.0, 0.1, &rates, 10_000, &mut rng).is_err());
        assert!(rayleigh_mmse_statistics(50.0, 0.1, &rates, 100, &mut rng).is_err());
    }

    #[test]
    fn rayleigh_vanishing_error_concentrates_on_the_diagonal() {
        let rates = RateSpace::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let js = rayleigh_mmse_statistics(50.0, 1e-9, &rates, 1_000_000, &mut rng).unwrap();
        let off: f64 = (0..6)
            .flat_map(|c| (0..6).map(move |e| (c, e)))
            .filter(|(c, e)| c != e)
            .map(|(c, e)| js.joint(0, c, e))
            .sum();
        assert!(off < 0.01, "off-diagonal mass {off}");
    }

    #[test]
    fn rayleigh_doubling_samples_stays_within_binomial_error() {
        let rates = RateSpace::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let n = 200_000;
        let a = rayleigh_mmse_statistics(50.0, 0.1, &rates, n, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = rayleigh_mmse_statistics(50.0, 0.1, &rates, 2 * n, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for (pa, pb) in a.table(0).iter().zip(b.table(0)) {
            let bound = 3.0 * (pa * (1.0 - pa) / n as f64).sqrt();
            assert!((pa - pb).abs() <= bound.max(1.0 / n as f64), "{pa} vs {pb}");
        }
    }
}
