use std::fmt::Write as _;
use std::path::Path;

use super::{
    evaluate, triplet_baseline_loss, EvalResult, Model, Objective, PairedDataset, TrainConfig,
};
use crate::error::{Error, Result};
use crate::knowledge::{default_stoplist, ConceptBasis};
use crate::numerics::{adam_step, AdamState, Matrix, SeededRng, Tape, Var};
use crate::objective::{
    dcl_i_loss, dcl_loss, kmeans, m_dcl_loss, paired_diversity, pgc_loss, total_loss, BankSide,
    LossReport, LossTerms, PrototypeState,
};
use crate::representation::{aggregate_batch, FeatureSequence, MemoryBank};

pub const METRICS_HEADER: &str =
    "epoch,l_dcl_i,l_mdcl,l_dcl_c,l_pgc,total,r1_t,r5_t,r10_t,r1_i,r5_i,r10_i,rsum";

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

/// Mean loss components over one epoch, plus validation recalls if a
/// validation split was given.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    pub losses: LossReport,
    pub eval: Option<EvalResult>,
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    pub basis: ConceptBasis,
    pub bank_v: MemoryBank,
    pub bank_w: MemoryBank,
    pub prototypes: Option<PrototypeState>,
    /// Completed epochs.
    pub epoch: usize,
    optimizer: Vec<AdamState>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// State after the last epoch.
    pub state: TrainState,
    /// Model with the highest validation R@sum and its 1-based epoch; the
    /// final model when no validation split was given.
    pub best: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochMetrics>,
}

impl TrainState {
    /// Builds the concept basis from the training captions unless one is
    /// supplied, and initialises all parameters from the config seed.
    pub fn init(
        cfg: &TrainConfig,
        data: &PairedDataset,
        basis: Option<ConceptBasis>,
    ) -> Result<Self> {
        cfg.validate()?;
        let (image_dim, caption_dim) = data
            .feature_dims()
            .ok_or_else(|| Error::EmptyInput("training set is empty".into()))?;
        let basis = match basis {
            Some(b) => b,
            None => ConceptBasis::build(
                &data.corpus(),
                cfg.g_concepts,
                &default_stoplist(),
                cfg.dim,
                cfg.seed,
                cfg.eps_t,
            )?,
        };
        let concept_dim = basis.vocabulary.embeddings().cols();
        let mut rng = SeededRng::fork(cfg.seed, STREAM_INIT);
        let model = Model::new(cfg, image_dim, caption_dim, concept_dim, &mut rng)?;
        let optimizer = model
            .parameters()
            .iter()
            .map(|p| AdamState::new(p.shape(), cfg.lr))
            .collect();
        Ok(TrainState {
            bank_v: MemoryBank::new(cfg.bank_capacity, cfg.dim)?,
            bank_w: MemoryBank::new(cfg.bank_capacity, cfg.dim)?,
            model,
            basis,
            prototypes: None,
            epoch: 0,
            optimizer,
        })
    }
}

/// Record indices of each batch: a seeded shuffle cut into full batches.
/// A set smaller than one batch forms a single batch.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    if n < batch_size {
        return if n >= 2 { vec![order] } else { Vec::new() };
    }
    order
        .chunks_exact(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Cluster labels for every training record from `v^I + w^I` of the main encoders.
pub fn compute_prototypes(
    model: &Model,
    data: &PairedDataset,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<PrototypeState> {
    let images: Vec<&FeatureSequence> = data.records().iter().map(|r| &r.image_features).collect();
    let captions: Vec<&FeatureSequence> =
        data.records().iter().map(|r| &r.caption_features).collect();
    let v = model.instance.main.visual.embed(&images)?;
    let w = model.instance.main.textual.embed(&captions)?;
    let seed = cfg
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(epoch as u64);
    let result = kmeans(&v.add(&w)?, cfg.k_clusters, cfg.kmeans_iters, seed)?;
    Ok(PrototypeState::from_kmeans(result))
}

fn instance_loss(tape: &mut Tape, cfg: &TrainConfig, s: Var) -> Result<Var> {
    match cfg.objective {
        Objective::Triplet => triplet_baseline_loss(tape, s, cfg.triplet_margin),
        Objective::InstanceImplicit => dcl_i_loss(tape, s, cfg.mu, cfg.gamma),
        Objective::InstanceExplicit | Objective::Full => {
            let (fwd, bwd) =
                paired_diversity(tape.value(s), Some(cfg.diversity_estimator), cfg.eps_div)?;
            dcl_loss(tape, s, &fwd, &bwd, cfg.mu, cfg.gamma)
        }
    }
}

/// One optimisation step on the records in `batch`.
pub fn train_step(
    state: &mut TrainState,
    cfg: &TrainConfig,
    data: &PairedDataset,
    batch: &[usize],
    batch_index: usize,
) -> Result<LossReport> {
    let records = data.records();
    let images: Vec<&FeatureSequence> = batch.iter().map(|&i| &records[i].image_features).collect();
    let captions: Vec<&FeatureSequence> = batch
        .iter()
        .map(|&i| &records[i].caption_features)
        .collect();
    let model = &state.model;

    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, true);
    let v_i = aggregate_batch(&mut tape, &vars.visual, &images)?;
    let w_i = aggregate_batch(&mut tape, &vars.textual, &captions)?;
    let w_t = tape.transpose(w_i)?;
    let s_i = tape.matmul(v_i, w_t)?;
    let inst = instance_loss(&mut tape, cfg, s_i)?;

    let mut momentum_batch = None;
    let (loss, report) = if cfg.objective.uses_concepts() {
        let mom = state.model.instance.momentum();
        let v_m = mom.visual.embed(&images)?;
        let w_m = mom.textual.embed(&captions)?;
        let warm = batch.len().min(cfg.bank_capacity);
        let m_dcl = if state.bank_v.len() >= warm && state.bank_w.len() >= warm {
            let (div_v, div_w) =
                paired_diversity(tape.value(s_i), Some(cfg.diversity_estimator), cfg.eps_div)?;
            let (bank_v, bank_w) = (state.bank_v.to_matrix(), state.bank_w.to_matrix());
            let visual = BankSide {
                anchors: v_i,
                momentum_positives: &w_m,
                bank: &bank_w,
                batch_diversity: &div_v,
            };
            let textual = BankSide {
                anchors: w_i,
                momentum_positives: &v_m,
                bank: &bank_v,
                batch_diversity: &div_w,
            };
            let est = Some(cfg.diversity_estimator);
            Some(m_dcl_loss(
                &mut tape,
                &visual,
                &textual,
                est,
                cfg.eps_div,
                cfg.mu,
                cfg.gamma,
            )?)
        } else {
            None
        };
        momentum_batch = Some((v_m, w_m));

        let y = model.concept_basis(&mut tape, &vars, &state.basis)?;
        let v_c = model.visual_concepts(&mut tape, &vars, y, v_i)?;
        let (_, w_c) = model.encode_captions(&mut tape, &vars, y, &captions)?;
        let w_ct = tape.transpose(w_c)?;
        let s_c = tape.matmul(v_c, w_ct)?;
        let (fwd, bwd) =
            paired_diversity(tape.value(s_c), Some(cfg.diversity_estimator), cfg.eps_div)?;
        let dcl_c = dcl_loss(&mut tape, s_c, &fwd, &bwd, cfg.mu, cfg.gamma)?;

        let protos = state.prototypes.as_ref().ok_or_else(|| {
            Error::InvalidParameter("prototypes must be computed before training steps".into())
        })?;
        let labels: Vec<usize> = batch.iter().map(|&i| protos.labels[i]).collect();
        let pgc = pgc_loss(&mut tape, v_c, w_c, vars.classifier, &labels)?;
        let terms = LossTerms {
            dcl_i: Some(inst),
            m_dcl,
            dcl_c: Some(dcl_c),
            pgc: Some(pgc),
        };
        total_loss(&mut tape, terms, cfg.lambda_l)?
    } else {
        let value = tape.scalar(inst);
        let report = LossReport {
            dcl_i: value,
            total: value,
            ..LossReport::default()
        };
        (inst, report)
    };

    if !report.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: state.epoch + 1,
            batch: batch_index,
        });
    }
    let grads = tape.backward(loss)?;
    let lr = cfg.learning_rate(state.epoch);
    let var_list = vars.list();
    let params = state.model.parameters_mut();
    for ((param, var), adam) in params
        .into_iter()
        .zip(var_list)
        .zip(state.optimizer.iter_mut())
    {
        adam.lr = lr;
        let g = grads.get_or_zeros(var, param.shape());
        *param = adam_step(adam, param, &g)?;
    }

    if let Some((v_m, w_m)) = momentum_batch {
        state.model.instance.momentum_update(cfg.momentum)?;
        state.bank_v.enqueue(&v_m)?;
        state.bank_w.enqueue(&w_m)?;
    }
    Ok(report)
}

/// Runs one epoch and returns the mean of each loss component.
pub fn train_epoch(
    state: &mut TrainState,
    cfg: &TrainConfig,
    data: &PairedDataset,
    rng: &mut SeededRng,
) -> Result<LossReport> {
    if cfg.objective.uses_concepts() {
        state.prototypes = Some(compute_prototypes(&state.model, data, cfg, state.epoch)?);
    }
    let batches = epoch_batches(data.len(), cfg.batch_size, rng);
    let mut sum = LossReport::default();
    for (b, batch) in batches.iter().enumerate() {
        let r = train_step(state, cfg, data, batch, b)?;
        sum.dcl_i += r.dcl_i;
        sum.m_dcl += r.m_dcl;
        sum.dcl_c += r.dcl_c;
        sum.pgc += r.pgc;
        sum.total += r.total;
    }
    state.epoch += 1;
    let n = batches.len().max(1) as f64;
    Ok(LossReport {
        dcl_i: sum.dcl_i / n,
        m_dcl: sum.m_dcl / n,
        dcl_c: sum.dcl_c / n,
        pgc: sum.pgc / n,
        total: sum.total / n,
    })
}

/// Full training run. With a validation split, recalls are computed after
/// every epoch and the best-R@sum model is kept.
pub fn train(
    cfg: &TrainConfig,
    data: &PairedDataset,
    val: Option<&PairedDataset>,
    basis: Option<ConceptBasis>,
) -> Result<TrainOutcome> {
    let mut state = TrainState::init(cfg, data, basis)?;
    if cfg.objective.uses_concepts() && data.len() < cfg.k_clusters {
        return Err(Error::InvalidParameter(format!(
            "{} clusters requested for {} training records",
            cfg.k_clusters,
            data.len()
        )));
    }
    let mut rng = SeededRng::fork(cfg.seed, STREAM_SHUFFLE);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best = state.model.clone();
    let mut best_epoch = 0;
    let mut best_rsum = f64::NEG_INFINITY;
    for _ in 0..cfg.epochs {
        let losses = train_epoch(&mut state, cfg, data, &mut rng)?;
        let eval = match val {
            Some(v) => Some(evaluate(&state.model, &state.basis, v, cfg.eval_beta())?),
            None => None,
        };
        let rsum = eval.map_or(f64::INFINITY, |e| e.rsum);
        if rsum > best_rsum || val.is_none() {
            best_rsum = rsum;
            best = state.model.clone();
            best_epoch = state.epoch;
        }
        log.push(EpochMetrics {
            epoch: state.epoch,
            losses,
            eval,
        });
    }
    Ok(TrainOutcome {
        state,
        best,
        best_epoch,
        log,
    })
}

/// The metrics log as CSV; recall columns are empty without validation.
pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in log {
        let l = &m.losses;
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            m.epoch, l.dcl_i, l.m_dcl, l.dcl_c, l.pgc, l.total
        );
        match &m.eval {
            Some(e) => {
                let _ = write!(
                    out,
                    ",{},{},{},{},{},{},{}",
                    e.r1_t, e.r5_t, e.r10_t, e.r1_i, e.r5_i, e.r10_i, e.rsum
                );
            }
            None => out.push_str(",,,,,,,"),
        }
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(path: &Path, log: &[EpochMetrics]) -> Result<()> {
    std::fs::write(path, metrics_csv(log))?;
    Ok(())
}

/// Per-record instance embeddings `(v^I, w^I)` of a dataset.
pub fn instance_embeddings(model: &Model, data: &PairedDataset) -> Result<(Matrix, Matrix)> {
    let images: Vec<&FeatureSequence> = data.records().iter().map(|r| &r.image_features).collect();
    let captions: Vec<&FeatureSequence> =
        data.records().iter().map(|r| &r.caption_features).collect();
    Ok((
        model.instance.main.visual.embed(&images)?,
        model.instance.main.textual.embed(&captions)?,
    ))
}
