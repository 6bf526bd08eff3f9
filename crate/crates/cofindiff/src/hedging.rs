//! Deep-hedging harness: episode simulation with transaction costs,
//! Black-Scholes reference policies, ERM training of the policy network, and
//! scenario-sliced evaluation.

use std::path::Path;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW, VarBuilder, VarMap};
use serde::{Deserialize, Serialize};

use cofindiff_core::bs::bs_features;
use cofindiff_core::risk::{erm, var_cvar};
use cofindiff_core::ConditionPair;

use crate::checkpoint;
use crate::config::HedgingConfig;
use crate::error::{AppError, Result};
use crate::nn::hedger::{HedgerConfig, HedgerNet};
use crate::tensor::{device, scalar, to_vec1, DTYPE};

pub const CHECKPOINT_KIND: &str = "hedger";

/// European call with payoff max(S_T - K, 0) at `maturity_steps`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity_steps: usize,
}

impl OptionSpec {
    pub fn payoff(&self, s_t: f64) -> f64 {
        (s_t - self.strike).max(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RiskParams {
    pub erm_gamma: f64,
    pub cvar_alpha: f64,
}

/// One hedging simulation: rescaled path, positions, and the P&L ledger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeEpisode {
    /// maturity_steps + 1 prices with S_0 = 1.
    pub prices: Vec<f64>,
    /// Position held over each of the maturity_steps intervals.
    pub positions: Vec<f64>,
    pub payoff: f64,
    pub trading_gains: f64,
    pub trading_cost: f64,
    /// X = -payoff + trading_gains - trading_cost (gain convention).
    pub terminal_pnl: f64,
}

impl HedgeEpisode {
    /// Exact ledger conservation: the stored X must equal the expression it
    /// was built from, bit for bit.
    pub fn ledger_conserved(&self) -> bool {
        self.terminal_pnl == -self.payoff + self.trading_gains - self.trading_cost
    }
}

/// Hedging policies usable in plain (non-training) simulation.
pub enum Policy<'a> {
    /// Never trade.
    Zero,
    /// Hold the Black-Scholes delta each step.
    BsDelta,
    /// The trained network.
    Net(&'a HedgerNet),
}

/// Daily volatility implied by a realized-volatility feature in scaled-return
/// units: sigma_day = sqrt(rv) / 100.
pub fn sigma_from_rv(rv: f64) -> f64 {
    (rv.max(0.0)).sqrt() / 100.0
}

fn feature_row(
    s: f64,
    ttm: f64,
    delta_prev: f64,
    vol_feature: f64,
    strike: f64,
) -> [f64; 7] {
    let sigma = sigma_from_rv(vol_feature);
    let g = bs_features(s, strike, sigma, ttm);
    [s, ttm, delta_prev, vol_feature, g.delta, g.gamma, g.theta]
}

/// Simulate one hedging episode. The path is rescaled to S_0 = 1;
/// `vol_feature` is the episode's realized volatility in scaled-return units.
pub fn simulate_hedge(
    policy: &Policy,
    path: &[f64],
    spec: &OptionSpec,
    cost_rate: f64,
    vol_feature: f64,
) -> Result<HedgeEpisode> {
    if path.len() != spec.maturity_steps + 1 {
        return Err(AppError::Validation(vec![format!(
            "path length {} does not match maturity {} + 1",
            path.len(),
            spec.maturity_steps
        )]));
    }
    let s0 = path[0];
    let s0_ok = s0.is_finite() && s0 > 0.0;
    if !s0_ok {
        return Err(AppError::Validation(vec![format!(
            "initial price must be positive, got {s0}"
        )]));
    }
    let prices: Vec<f64> = path.iter().map(|&p| p / s0).collect();
    let t_steps = spec.maturity_steps;
    let mut positions = Vec::with_capacity(t_steps);
    let mut delta_prev = 0.0;
    let mut gains = 0.0;
    let mut cost = 0.0;
    let dev = device();
    for t in 0..t_steps {
        let s = prices[t];
        let ttm = (t_steps - t) as f64 / t_steps as f64;
        let row = feature_row(s, ttm, delta_prev, vol_feature, spec.strike);
        let delta = match policy {
            Policy::Zero => 0.0,
            Policy::BsDelta => row[4],
            Policy::Net(net) => {
                let x = Tensor::from_vec(row.to_vec(), (1, 7), &dev)?;
                to_vec1(&net.forward(&x)?)?[0]
            }
        };
        if !delta.is_finite() {
            return Err(AppError::Diverged(format!(
                "non-finite policy output {delta} at step {t} (S = {s})"
            )));
        }
        cost += cost_rate * s * (delta - delta_prev).abs();
        gains += delta * (prices[t + 1] - s);
        positions.push(delta);
        delta_prev = delta;
    }
    // Terminal unwind back to a flat position.
    cost += cost_rate * prices[t_steps] * delta_prev.abs();
    let payoff = spec.payoff(prices[t_steps]);
    let terminal_pnl = -payoff + gains - cost;
    Ok(HedgeEpisode {
        prices,
        positions,
        payoff,
        trading_gains: gains,
        trading_cost: cost,
        terminal_pnl,
    })
}

/// Batched network episodes: one tensor forward per step across all paths,
/// with the ledger accumulated in plain f64 exactly as `simulate_hedge` does.
pub fn simulate_hedge_net_batch(
    net: &HedgerNet,
    paths: &[Vec<f64>],
    spec: &OptionSpec,
    cost_rate: f64,
    vol_features: &[f64],
) -> Result<Vec<HedgeEpisode>> {
    if paths.len() != vol_features.len() {
        return Err(AppError::Validation(vec![format!(
            "{} paths but {} volatility features",
            paths.len(),
            vol_features.len()
        )]));
    }
    let n = paths.len();
    let t_steps = spec.maturity_steps;
    let dev = device();
    let mut prices: Vec<Vec<f64>> = Vec::with_capacity(n);
    for p in paths {
        if p.len() != t_steps + 1 {
            return Err(AppError::Validation(vec![format!(
                "path length {} does not match maturity {} + 1",
                p.len(),
                t_steps
            )]));
        }
        let p0_ok = p[0].is_finite() && p[0] > 0.0;
        if !p0_ok {
            return Err(AppError::Validation(vec![
                "initial price must be positive".to_string(),
            ]));
        }
        prices.push(p.iter().map(|&x| x / p[0]).collect());
    }
    let mut delta_prev = vec![0.0f64; n];
    let mut gains = vec![0.0f64; n];
    let mut cost = vec![0.0f64; n];
    let mut positions = vec![Vec::with_capacity(t_steps); n];
    for t in 0..t_steps {
        let ttm = (t_steps - t) as f64 / t_steps as f64;
        let mut rows = Vec::with_capacity(n * 7);
        for i in 0..n {
            rows.extend_from_slice(&feature_row(
                prices[i][t],
                ttm,
                delta_prev[i],
                vol_features[i],
                spec.strike,
            ));
        }
        let x = Tensor::from_vec(rows, (n, 7), &dev)?;
        let deltas = to_vec1(&net.forward(&x)?)?;
        for i in 0..n {
            let delta = deltas[i];
            if !delta.is_finite() {
                return Err(AppError::Diverged(format!(
                    "non-finite policy output at step {t}, path {i}"
                )));
            }
            let s = prices[i][t];
            cost[i] += cost_rate * s * (delta - delta_prev[i]).abs();
            gains[i] += delta * (prices[i][t + 1] - s);
            positions[i].push(delta);
            delta_prev[i] = delta;
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut c = cost[i];
            c += cost_rate * prices[i][t_steps] * delta_prev[i].abs();
            let payoff = spec.payoff(prices[i][t_steps]);
            let terminal_pnl = -payoff + gains[i] - c;
            HedgeEpisode {
                prices: prices[i].clone(),
                positions: positions[i].clone(),
                payoff,
                trading_gains: gains[i],
                trading_cost: c,
                terminal_pnl,
            }
        })
        .collect())
}

/// Entropic risk of a gain tensor with a max-shift, differentiable.
pub fn erm_tensor(x: &Tensor, gamma: f64) -> Result<Tensor> {
    let y = (x * (-gamma))?;
    let m = scalar(&y.max_all()?)?;
    Ok((((y - m)?.exp()?.mean_all()?.log()? + m)? / gamma)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgerMeta {
    pub config: HedgerConfig,
    pub cost_rate: f64,
    pub strike: f64,
    pub erm_gamma: f64,
}

pub struct HedgerModel {
    pub net: HedgerNet,
    pub varmap: VarMap,
    pub meta: HedgerMeta,
}

impl HedgerModel {
    pub fn build(meta: HedgerMeta, init_seed: u64) -> Result<Self> {
        let dev = device();
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DTYPE, &dev);
        let net = HedgerNet::new(&meta.config, vb)?;
        crate::tensor::deterministic_init(&varmap, init_seed)?;
        Ok(Self { net, varmap, meta })
    }

    pub fn save(&self, dir: &Path, seed: u64) -> Result<()> {
        checkpoint::save_checkpoint(dir, CHECKPOINT_KIND, seed, &self.meta, &self.varmap)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = checkpoint::load_meta::<HedgerMeta>(dir, CHECKPOINT_KIND)?;
        let mut model = Self::build(meta.payload, 0)?;
        checkpoint::load_weights(dir, &mut model.varmap)?;
        Ok(model)
    }
}

/// Per-step constant policy inputs for a batch of paths, precomputed outside
/// the autodiff graph.
struct EpisodeBatch {
    /// Per step: (B, 2) [S, ttm] and (B, 4) [vol, delta, gamma, theta].
    step_head: Vec<Tensor>,
    step_tail: Vec<Tensor>,
    /// Per step: (B,) price increments S_{t+1} - S_t.
    ds: Vec<Tensor>,
    /// (B,) spot at each step, for cost accrual.
    spot: Vec<Tensor>,
    s_last: Tensor,
    payoff: Tensor,
    n: usize,
    t_steps: usize,
}

fn prepare_batch(
    paths: &[Vec<f64>],
    vol_features: &[f64],
    spec: &OptionSpec,
) -> Result<EpisodeBatch> {
    let dev = device();
    let n = paths.len();
    let t_steps = spec.maturity_steps;
    let prices: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| p.iter().map(|&x| x / p[0]).collect())
        .collect();
    let mut step_head = Vec::with_capacity(t_steps);
    let mut step_tail = Vec::with_capacity(t_steps);
    let mut ds = Vec::with_capacity(t_steps);
    let mut spot = Vec::with_capacity(t_steps);
    for t in 0..t_steps {
        let ttm = (t_steps - t) as f64 / t_steps as f64;
        let mut head = Vec::with_capacity(n * 2);
        let mut tail = Vec::with_capacity(n * 4);
        let mut d = Vec::with_capacity(n);
        let mut s_col = Vec::with_capacity(n);
        for i in 0..n {
            let s = prices[i][t];
            let g = bs_features(s, spec.strike, sigma_from_rv(vol_features[i]), ttm);
            head.push(s);
            head.push(ttm);
            tail.push(vol_features[i]);
            tail.push(g.delta);
            tail.push(g.gamma);
            tail.push(g.theta);
            d.push(prices[i][t + 1] - s);
            s_col.push(s);
        }
        step_head.push(Tensor::from_vec(head, (n, 2), &dev)?);
        step_tail.push(Tensor::from_vec(tail, (n, 4), &dev)?);
        ds.push(Tensor::from_vec(d, n, &dev)?);
        spot.push(Tensor::from_vec(s_col, n, &dev)?);
    }
    let s_last = Tensor::from_vec(
        prices.iter().map(|p| p[t_steps]).collect::<Vec<f64>>(),
        n,
        &dev,
    )?;
    let payoff = Tensor::from_vec(
        prices
            .iter()
            .map(|p| spec.payoff(p[t_steps]))
            .collect::<Vec<f64>>(),
        n,
        &dev,
    )?;
    Ok(EpisodeBatch {
        step_head,
        step_tail,
        ds,
        spot,
        s_last,
        payoff,
        n,
        t_steps,
    })
}

/// In-graph terminal P&L of the network policy over a prepared batch.
fn batch_pnl(net: &HedgerNet, batch: &EpisodeBatch, cost_rate: f64) -> Result<Tensor> {
    let dev = device();
    let mut delta_prev = Tensor::zeros(batch.n, DTYPE, &dev)?;
    let mut gains = Tensor::zeros(batch.n, DTYPE, &dev)?;
    let mut cost = Tensor::zeros(batch.n, DTYPE, &dev)?;
    for t in 0..batch.t_steps {
        let features = Tensor::cat(
            &[
                batch.step_head[t].clone(),
                delta_prev.unsqueeze(1)?,
                batch.step_tail[t].clone(),
            ],
            1,
        )?;
        let delta = net.forward(&features)?;
        cost = (cost + ((&delta - &delta_prev)?.abs()? * &batch.spot[t])? * cost_rate)?;
        gains = (gains + (&delta * &batch.ds[t])?)?;
        delta_prev = delta;
    }
    cost = (cost + (delta_prev.abs()? * &batch.s_last)? * cost_rate)?;
    Ok(((gains - &batch.payoff)? - cost)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeTrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_erm: f64,
    pub zero_policy_val_erm: f64,
    pub train_erms: Vec<f64>,
    pub val_erms: Vec<f64>,
}

/// Minimize ERM of the hedged P&L over GBM (or externally supplied) episodes.
/// `train_paths` and `val_paths` carry their volatility features alongside.
#[allow(clippy::too_many_arguments)]
pub fn train_hedger(
    train_paths: &[Vec<f64>],
    train_vols: &[f64],
    val_paths: &[Vec<f64>],
    val_vols: &[f64],
    hcfg: &HedgingConfig,
    patience: usize,
    lr: f64,
    seed: u64,
) -> Result<(HedgerModel, HedgeTrainReport)> {
    if train_paths.is_empty() || val_paths.is_empty() {
        return Err(AppError::Validation(vec![
            "hedger training needs nonempty train and val path sets".to_string(),
        ]));
    }
    let spec = OptionSpec {
        strike: hcfg.strike,
        maturity_steps: train_paths[0].len() - 1,
    };
    let meta = HedgerMeta {
        config: hcfg.hedger.clone(),
        cost_rate: hcfg.cost_rate,
        strike: hcfg.strike,
        erm_gamma: hcfg.erm_gamma,
    };
    let model = HedgerModel::build(meta, seed)?;
    let val_batch = prepare_batch(val_paths, val_vols, &spec)?;

    // No-hedge baseline on the validation set, for the report.
    let zero_pnl: Vec<f64> = val_paths
        .iter()
        .map(|p| -spec.payoff(p[p.len() - 1] / p[0]))
        .collect();
    let zero_erm = erm(&zero_pnl, hcfg.erm_gamma)?;

    let mut opt = AdamW::new(
        model.varmap.all_vars(),
        ParamsAdamW {
            lr,
            ..Default::default()
        },
    )?;
    use rand::prelude::*;
    let mut rng = crate::tensor::sample_rng(seed.wrapping_add(3), 0);
    let mut order: Vec<usize> = (0..train_paths.len()).collect();
    let mut best = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_weights: Vec<(String, Tensor)> = Vec::new();
    let mut since_best = 0usize;
    let mut train_erms = Vec::new();
    let mut val_erms = Vec::new();
    let mut epochs_run = 0usize;

    let schedule = crate::config::TrainControl {
        lr,
        lr_min: hcfg.train.lr_min.min(lr),
        ..hcfg.train.clone()
    };
    for epoch in 0..hcfg.train.epochs {
        epochs_run = epoch + 1;
        opt.set_learning_rate(schedule.lr_at(epoch));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hcfg.train.batch_size) {
            let paths: Vec<Vec<f64>> =
                chunk.iter().map(|&i| train_paths[i].clone()).collect();
            let vols: Vec<f64> = chunk.iter().map(|&i| train_vols[i]).collect();
            let batch = prepare_batch(&paths, &vols, &spec)?;
            let pnl = batch_pnl(&model.net, &batch, hcfg.cost_rate)?;
            let loss = erm_tensor(&pnl, hcfg.erm_gamma)?;
            let v = scalar(&loss)?;
            if !v.is_finite() {
                return Err(AppError::Diverged(format!(
                    "non-finite hedger loss at epoch {epoch}"
                )));
            }
            opt.backward_step(&loss)?;
            loss_sum += v;
            batches += 1;
        }
        train_erms.push(loss_sum / batches.max(1) as f64);
        let val_pnl = batch_pnl(&model.net, &val_batch, hcfg.cost_rate)?;
        let val_erm = scalar(&erm_tensor(&val_pnl, hcfg.erm_gamma)?)?;
        val_erms.push(val_erm);
        log::info!(
            "hedger epoch {epoch}: train {:.6} val {val_erm:.6} (no-hedge {zero_erm:.6})",
            train_erms.last().unwrap()
        );
        if val_erm < best {
            best = val_erm;
            best_epoch = epoch;
            best_weights = model
                .varmap
                .data()
                .lock()
                .unwrap()
                .iter()
                .map(|(name, var)| Ok((name.clone(), var.as_tensor().copy()?)))
                .collect::<Result<_>>()?;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                break;
            }
        }
    }
    if !best_weights.is_empty() {
        let data = model.varmap.data().lock().unwrap();
        for (name, tensor) in &best_weights {
            data.get(name)
                .ok_or_else(|| AppError::Other(format!("missing weight {name}")))?
                .set(tensor)?;
        }
    }
    let report = HedgeTrainReport {
        epochs_run,
        best_epoch,
        best_val_erm: best,
        zero_policy_val_erm: zero_erm,
        train_erms,
        val_erms,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceRisk {
    pub slice: String,
    pub episodes: usize,
    pub erm: f64,
    pub var: f64,
    pub cvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyRisk {
    pub policy: String,
    /// Present slices only; an empty scenario slice is omitted.
    pub slices: Vec<SliceRisk>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeReport {
    pub policies: Vec<PolicyRisk>,
}

/// Scenario-sliced risk table. Episode lists are aligned with `conds` (one
/// condition per path); the delta-hedge reference must be among the policies.
pub fn evaluate_hedger(
    policies: &[(String, Vec<HedgeEpisode>)],
    conds: &[ConditionPair],
    params: RiskParams,
) -> Result<HedgeReport> {
    let n = conds.len();
    for (name, eps) in policies {
        if eps.len() != n {
            return Err(AppError::Validation(vec![format!(
                "policy '{name}' has {} episodes for {n} conditions",
                eps.len()
            )]));
        }
    }
    // High-volatility cut: top decile of rv.
    let mut rvs: Vec<f64> = conds.iter().map(|c| c.rv).collect();
    rvs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cut_idx = ((0.9 * n as f64).floor() as usize).min(n.saturating_sub(1));
    let rv_cut = rvs.get(cut_idx).copied().unwrap_or(f64::INFINITY);

    type DayFilter<'a> = Box<dyn Fn(usize) -> bool + 'a>;
    let slices: [(&str, DayFilter); 3] = [
        ("all", Box::new(|_| true)),
        ("uptrend", Box::new(|i| conds[i].trend > 0.0)),
        ("high_vol", Box::new(|i| conds[i].rv >= rv_cut)),
    ];
    let mut out = Vec::new();
    for (name, eps) in policies {
        let mut slice_reports = Vec::new();
        for (slice_name, keep) in &slices {
            let x: Vec<f64> = (0..n)
                .filter(|&i| keep(i))
                .map(|i| eps[i].terminal_pnl)
                .collect();
            if x.is_empty() {
                continue;
            }
            let e = erm(&x, params.erm_gamma)?;
            let (var, cvar) = var_cvar(&x, params.cvar_alpha)?;
            slice_reports.push(SliceRisk {
                slice: slice_name.to_string(),
                episodes: x.len(),
                erm: e,
                var,
                cvar,
            });
        }
        out.push(PolicyRisk {
            policy: name.clone(),
            slices: slice_reports,
        });
    }
    Ok(HedgeReport { policies: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sample_rng;
    use cofindiff_core::sim::{simulate_gbm, GbmParams};

    fn spec() -> OptionSpec {
        OptionSpec {
            strike: 1.0,
            maturity_steps: 50,
        }
    }

    fn gbm_paths(n: usize, steps: usize, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
        let params = GbmParams::new(0.0, sigma, 1.0 / steps as f64).unwrap();
        (0..n)
            .map(|i| {
                let mut rng = sample_rng(seed, i as u64);
                simulate_gbm(&params, steps, 1.0, &mut rng).unwrap()
            })
            .collect()
    }

    fn realized_rv(path: &[f64]) -> f64 {
        cofindiff_core::condition::scaled_log_returns(path)
            .iter()
            .map(|r| r * r)
            .sum()
    }

    #[test]
    fn zero_policy_loses_exactly_the_payoff() {
        let path = gbm_paths(1, 50, 0.05, 1).remove(0);
        let rv = realized_rv(&path);
        let ep = simulate_hedge(&Policy::Zero, &path, &spec(), 1e-4, rv).unwrap();
        assert_eq!(ep.trading_cost, 0.0);
        assert_eq!(ep.trading_gains, 0.0);
        assert_eq!(ep.terminal_pnl, -ep.payoff);
        assert!(ep.ledger_conserved());
    }

    #[test]
    fn flat_path_any_policy_pays_only_costs() {
        let path = vec![1.0; 51];
        let ep = simulate_hedge(&Policy::BsDelta, &path, &spec(), 1e-4, 1.0).unwrap();
        assert_eq!(ep.payoff, 0.0);
        assert_eq!(ep.trading_gains, 0.0);
        assert!(ep.terminal_pnl <= 0.0);
        assert_eq!(ep.terminal_pnl, -ep.trading_cost);
    }

    #[test]
    fn delta_hedge_tightens_pnl_distribution() {
        let paths = gbm_paths(400, 50, 0.05, 2);
        let s = spec();
        let mut hedged = Vec::new();
        let mut unhedged = Vec::new();
        for p in &paths {
            let rv = realized_rv(p);
            hedged.push(
                simulate_hedge(&Policy::BsDelta, p, &s, 0.0, rv)
                    .unwrap()
                    .terminal_pnl,
            );
            unhedged.push(
                simulate_hedge(&Policy::Zero, p, &s, 0.0, rv)
                    .unwrap()
                    .terminal_pnl,
            );
        }
        let std = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        assert!(
            std(&hedged) < std(&unhedged),
            "hedged std {} vs unhedged {}",
            std(&hedged),
            std(&unhedged)
        );
    }

    #[test]
    fn cost_monotone_in_rate() {
        let path = gbm_paths(1, 50, 0.05, 3).remove(0);
        let rv = realized_rv(&path);
        let lo = simulate_hedge(&Policy::BsDelta, &path, &spec(), 1e-4, rv).unwrap();
        let hi = simulate_hedge(&Policy::BsDelta, &path, &spec(), 1e-3, rv).unwrap();
        assert!(hi.trading_cost > lo.trading_cost);
        assert!(hi.terminal_pnl < lo.terminal_pnl);
    }

    #[test]
    fn batch_simulation_matches_per_path() {
        let meta = HedgerMeta {
            config: HedgerConfig {
                hidden_width: 8,
                layers: 3,
            },
            cost_rate: 1e-4,
            strike: 1.0,
            erm_gamma: 100.0,
        };
        let model = HedgerModel::build(meta, 5).unwrap();
        let paths = gbm_paths(4, 50, 0.05, 6);
        let vols: Vec<f64> = paths.iter().map(|p| realized_rv(p)).collect();
        let batch =
            simulate_hedge_net_batch(&model.net, &paths, &spec(), 1e-4, &vols).unwrap();
        for (i, p) in paths.iter().enumerate() {
            let single =
                simulate_hedge(&Policy::Net(&model.net), p, &spec(), 1e-4, vols[i]).unwrap();
            assert!((single.terminal_pnl - batch[i].terminal_pnl).abs() < 1e-12);
            assert!(batch[i].ledger_conserved());
        }
    }

    #[test]
    fn erm_tensor_matches_scalar_erm() {
        let dev = device();
        let xs = vec![0.03, -0.05, 0.01, -0.12, 0.0, 0.07];
        let t = Tensor::from_vec(xs.clone(), xs.len(), &dev).unwrap();
        for gamma in [1.0, 10.0, 100.0] {
            let a = scalar(&erm_tensor(&t, gamma).unwrap()).unwrap();
            let b = erm(&xs, gamma).unwrap();
            assert!((a - b).abs() < 1e-12, "gamma {gamma}: {a} vs {b}");
        }
    }

    #[test]
    fn in_graph_pnl_matches_ledger_simulation() {
        let meta = HedgerMeta {
            config: HedgerConfig {
                hidden_width: 8,
                layers: 3,
            },
            cost_rate: 1e-4,
            strike: 1.0,
            erm_gamma: 100.0,
        };
        let model = HedgerModel::build(meta, 7).unwrap();
        let paths = gbm_paths(3, 50, 0.05, 8);
        let vols: Vec<f64> = paths.iter().map(|p| realized_rv(p)).collect();
        let batch = prepare_batch(&paths, &vols, &spec()).unwrap();
        let pnl = to_vec1(&batch_pnl(&model.net, &batch, 1e-4).unwrap()).unwrap();
        let episodes =
            simulate_hedge_net_batch(&model.net, &paths, &spec(), 1e-4, &vols).unwrap();
        for (a, ep) in pnl.iter().zip(&episodes) {
            assert!((a - ep.terminal_pnl).abs() < 1e-10, "{a} vs {}", ep.terminal_pnl);
        }
    }

    #[test]
    fn evaluation_report_has_three_slices_per_policy() {
        let paths = gbm_paths(40, 50, 0.05, 9);
        let s = spec();
        let conds: Vec<ConditionPair> = paths
            .iter()
            .map(|p| {
                let scaled = cofindiff_core::condition::scaled_log_returns(p);
                ConditionPair::from_scaled_returns(&scaled)
            })
            .collect();
        let eps: Vec<HedgeEpisode> = paths
            .iter()
            .zip(&conds)
            .map(|(p, c)| simulate_hedge(&Policy::BsDelta, p, &s, 0.0, c.rv).unwrap())
            .collect();
        let zero: Vec<HedgeEpisode> = paths
            .iter()
            .zip(&conds)
            .map(|(p, c)| simulate_hedge(&Policy::Zero, p, &s, 0.0, c.rv).unwrap())
            .collect();
        let report = evaluate_hedger(
            &[("delta".to_string(), eps), ("zero".to_string(), zero)],
            &conds,
            RiskParams {
                erm_gamma: 100.0,
                cvar_alpha: 0.05,
            },
        )
        .unwrap();
        assert_eq!(report.policies.len(), 2);
        for p in &report.policies {
            assert_eq!(p.slices.len(), 3);
            let all = &p.slices[0];
            assert_eq!(all.slice, "all");
            assert_eq!(all.episodes, 40);
            assert!(all.cvar >= all.var);
        }
    }

    #[test]
    fn hedger_checkpoint_round_trip() {
        let meta = HedgerMeta {
            config: HedgerConfig {
                hidden_width: 8,
                layers: 3,
            },
            cost_rate: 1e-4,
            strike: 1.0,
            erm_gamma: 100.0,
        };
        let model = HedgerModel::build(meta, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path(), 11).unwrap();
        let loaded = HedgerModel::load(dir.path()).unwrap();
        let path = gbm_paths(1, 50, 0.05, 12).remove(0);
        let rv = realized_rv(&path);
        let a = simulate_hedge(&Policy::Net(&model.net), &path, &spec(), 1e-4, rv).unwrap();
        let b = simulate_hedge(&Policy::Net(&loaded.net), &path, &spec(), 1e-4, rv).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.terminal_pnl, b.terminal_pnl);
    }
}
