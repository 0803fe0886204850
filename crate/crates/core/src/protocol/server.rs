//! Server state and the per-round procedures.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rayon::prelude::*;

use super::experiment::MetricsRow;
use super::ProtocolError;
use super::{
    average_models, select_clients, server_smooth, stack_clients, threshold_schedule, Algorithm, DataSource, Result,
    RunConfig,
};
use crate::dp::{apply_without_noise, clip_update, gaussianize, Purpose, StreamRng};
use crate::learner::{local_train, partition, synth_blobs_with_test, Dataset, Model, PartitionSpec};
use crate::tensor::tnn;

/// Client shards plus the pooled train set and the held-out test set.
#[derive(Debug, Clone)]
pub struct Federation {
    pub clients: Vec<Dataset>,
    pub train: Dataset,
    pub test: Dataset,
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| ProtocolError::Io(format!("{}: {e}", path.display())))?;
    Ok(Dataset::read_text(BufReader::new(f))?)
}

impl Federation {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let (train, test) = match &cfg.data {
            DataSource::Blobs { test_per_class, .. } => {
                let spec = cfg.data.blob_spec(cfg.seed).expect("blob source");
                synth_blobs_with_test(&spec, *test_per_class)?
            }
            DataSource::Files { train, test } => (read_dataset(train)?, read_dataset(test)?),
        };
        if train.dim() != test.dim() || train.num_classes() != test.num_classes() {
            return Err(ProtocolError::InvalidConfig {
                field: "data",
                reason: "train and test sets disagree on dimension or class count".into(),
            });
        }
        Self::from_datasets(train, test, cfg)
    }

    pub fn from_datasets(train: Dataset, test: Dataset, cfg: &RunConfig) -> Result<Self> {
        let spec = PartitionSpec {
            mode: cfg.partition,
            seed: cfg.seed,
        };
        let clients = partition(&train, cfg.n_total, &spec)?;
        Ok(Self { clients, train, test })
    }
}

#[derive(Debug, Clone)]
pub struct ServerState {
    /// `w′(t)`, the model that is evaluated.
    pub global: Model,
    /// `ŵ_k` from the latest smoothing round, keyed by client id.
    pub personalized: BTreeMap<usize, Model>,
    /// Last completed round; 0 before training.
    pub round: usize,
    pub last_selected: Vec<usize>,
    /// Uploads of the last round in `last_selected` order.
    pub last_uploads: Vec<Model>,
    /// Post-smoothing TNN summed over layers, set only by a smoothing round.
    pub last_tnn: Option<f64>,
    pub history: Vec<MetricsRow>,
}

impl ServerState {
    pub fn new(cfg: &RunConfig, dim: usize, num_classes: usize) -> Result<Self> {
        let global = Model::init(
            cfg.model,
            dim,
            num_classes,
            &StreamRng::root(cfg.seed, Purpose::ModelInit),
        )?;
        Ok(Self {
            global,
            personalized: BTreeMap::new(),
            round: 0,
            last_selected: Vec::new(),
            last_uploads: Vec::new(),
            last_tnn: None,
            history: Vec::new(),
        })
    }
}

/// ClientDPUpdate: local SGD from `start`, clip the delta, then upload
/// `start + η(Δ̃ + z)`. FedAvg skips `z`.
pub fn client_update(start: &Model, data: &Dataset, cfg: &RunConfig, round: usize, client: usize) -> Result<Model> {
    let shuffle = StreamRng::new(cfg.seed, round as u64, client as u64, Purpose::Shuffle);
    let local = local_train(start, data, cfg.local_epochs, cfg.batch_size, cfg.lr, &shuffle)?;
    let w0 = start.flatten();
    let delta: Vec<f64> = local.flatten().iter().zip(&w0).map(|(w, s)| w - s).collect();
    let clipped = clip_update(&delta, cfg.dp.clip_c)?;
    let upload = if cfg.algorithm.adds_noise() {
        let noise = StreamRng::new(cfg.seed, round as u64, client as u64, Purpose::Noise);
        gaussianize(&w0, &clipped, cfg.lr, &cfg.dp, &noise)?
    } else {
        apply_without_noise(&w0, &clipped, cfg.lr)?
    };
    Ok(start.unflatten(&upload)?)
}

fn uploads(fed: &Federation, cfg: &RunConfig, round: usize, starts: &[(usize, &Model)]) -> Result<Vec<Model>> {
    starts
        .par_iter()
        .map(|&(c, start)| client_update(start, &fed.clients[c], cfg, round, c))
        .collect()
}

fn begin_round(state: &ServerState, fed: &Federation, cfg: &RunConfig) -> Result<(usize, Vec<usize>)> {
    if fed.clients.len() != cfg.n_total {
        return Err(ProtocolError::InvalidConfig {
            field: "n_total",
            reason: format!("federation has {} clients", fed.clients.len()),
        });
    }
    if state.round >= cfg.rounds {
        return Err(ProtocolError::InvalidConfig {
            field: "rounds",
            reason: format!("round {} exceeds T = {}", state.round + 1, cfg.rounds),
        });
    }
    let t = state.round + 1;
    Ok((t, select_clients(cfg.n_total, cfg.k_selected, t, cfg.seed)?))
}

/// One LDP-FedAvg round (or plain FedAvg when the algorithm adds no noise).
pub fn run_round_fedavg(state: &mut ServerState, fed: &Federation, cfg: &RunConfig) -> Result<()> {
    let (t, selected) = begin_round(state, fed, cfg)?;
    let starts: Vec<(usize, &Model)> = selected.iter().map(|&c| (c, &state.global)).collect();
    let ups = uploads(fed, cfg, t, &starts)?;
    state.global = average_models(&ups)?;
    state.round = t;
    state.last_selected = selected;
    state.last_uploads = ups;
    state.last_tnn = None;
    Ok(())
}

/// One FedCEO round. Clients restart from their `ŵ_k` in the round right
/// after a smoothing round; smoothing rounds (`t ≡ 0 mod I`) replace the
/// uploads by their truncated tSVD and set the global model to their mean.
pub fn run_round_fedceo(state: &mut ServerState, fed: &Federation, cfg: &RunConfig) -> Result<()> {
    let (t, selected) = begin_round(state, fed, cfg)?;
    let restart = t > 1 && (t - 1) % cfg.interval == 0;
    let starts: Vec<(usize, &Model)> = selected
        .iter()
        .map(|&c| {
            let start = if restart { state.personalized.get(&c) } else { None };
            (c, start.unwrap_or(&state.global))
        })
        .collect();
    let ups = uploads(fed, cfg, t, &starts)?;
    if t % cfg.interval == 0 {
        let mut threshold = threshold_schedule(cfg.lambda, cfg.ratio, t, cfg.interval)?;
        if cfg.threshold_div_k {
            threshold /= cfg.k_selected as f64;
        }
        let smoothed = server_smooth(&ups, threshold)?;
        let mut total = 0.0;
        for block in stack_clients(&smoothed)? {
            total += tnn(&block)?;
        }
        state.global = average_models(&smoothed)?;
        state.personalized = selected.iter().copied().zip(smoothed).collect();
        state.last_tnn = Some(total);
    } else {
        state.global = average_models(&ups)?;
        state.last_tnn = None;
    }
    state.round = t;
    state.last_selected = selected;
    state.last_uploads = ups;
    Ok(())
}

pub fn run_round(state: &mut ServerState, fed: &Federation, cfg: &RunConfig) -> Result<()> {
    match cfg.algorithm {
        Algorithm::FedAvg | Algorithm::LdpFedAvg => run_round_fedavg(state, fed, cfg),
        Algorithm::FedCeo => run_round_fedceo(state, fed, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::DpConfig;
    use crate::learner::{backward, forward_loss, Architecture, PartitionMode};
    use ndarray::Array2;

    fn small_cfg(algorithm: Algorithm) -> RunConfig {
        RunConfig {
            n_total: 6,
            k_selected: 3,
            rounds: 8,
            local_epochs: 2,
            batch_size: 8,
            lr: 0.2,
            dp: DpConfig {
                k_selected: 3,
                sigma: 2.0,
                ..DpConfig::default()
            },
            interval: 3,
            algorithm,
            data: DataSource::Blobs {
                num_classes: 3,
                dim: 4,
                samples_per_class: 20,
                test_per_class: 10,
                spread: 0.3,
                latent_rank: None,
            },
            ..RunConfig::default()
        }
    }

    fn setup(cfg: &RunConfig) -> (Federation, ServerState) {
        let fed = Federation::from_config(cfg).unwrap();
        let st = ServerState::new(cfg, fed.train.dim(), fed.train.num_classes()).unwrap();
        (fed, st)
    }

    #[test]
    fn single_client_full_batch_is_one_scaled_clipped_step() {
        let mut cfg = small_cfg(Algorithm::FedAvg);
        cfg.n_total = 1;
        cfg.k_selected = 1;
        cfg.dp.k_selected = 1;
        cfg.local_epochs = 1;
        cfg.batch_size = 1000;
        cfg.dp.clip_c = 0.05;
        let (fed, mut st) = setup(&cfg);
        let w0 = st.global.clone();
        run_round(&mut st, &fed, &cfg).unwrap();

        let (_, cache) = forward_loss(&w0, fed.train.features().view(), fed.train.labels()).unwrap();
        let g = backward(&w0, &cache).unwrap();
        let delta: Vec<f64> = g.iter().map(|v| -cfg.lr * v).collect();
        let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > cfg.dp.clip_c, "test needs the clip to bind");
        let want: Vec<f64> = w0
            .flatten()
            .iter()
            .zip(&delta)
            .map(|(w, d)| w + cfg.lr * d * cfg.dp.clip_c / norm)
            .collect();
        for (a, b) in st.global.flatten().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_clients_average_to_any_client() {
        let mut cfg = small_cfg(Algorithm::FedAvg);
        cfg.n_total = 3;
        let (_, st0) = setup(&cfg);
        let (base, _) = setup(&cfg);
        let shard = base.clients[0].clone();
        let fed = Federation {
            clients: vec![shard.clone(); 3],
            train: base.train.clone(),
            test: base.test.clone(),
        };
        // Full batches make the shuffle order irrelevant up to summation order.
        cfg.batch_size = 1000;
        cfg.local_epochs = 1;
        let mut st = st0.clone();
        run_round(&mut st, &fed, &cfg).unwrap();
        let one = client_update(&st0.global, &shard, &cfg, 1, 0).unwrap();
        for (a, b) in st.global.flatten().iter().zip(one.flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rounds_are_deterministic() {
        for alg in [Algorithm::FedAvg, Algorithm::LdpFedAvg, Algorithm::FedCeo] {
            let cfg = small_cfg(alg);
            let (fed, mut a) = setup(&cfg);
            let mut b = a.clone();
            for _ in 0..cfg.rounds {
                run_round(&mut a, &fed, &cfg).unwrap();
                run_round(&mut b, &fed, &cfg).unwrap();
            }
            assert_eq!(a.global, b.global);
            assert!(run_round(&mut a, &fed, &cfg).is_err(), "round T+1 must be rejected");
        }
    }

    #[test]
    fn fedceo_without_smoothing_is_ldp_fedavg() {
        let mut ceo = small_cfg(Algorithm::FedCeo);
        ceo.interval = ceo.rounds + 1;
        let ldp = RunConfig {
            algorithm: Algorithm::LdpFedAvg,
            ..ceo.clone()
        };
        let (fed, mut a) = setup(&ceo);
        let mut b = a.clone();
        for _ in 0..ceo.rounds {
            run_round(&mut a, &fed, &ceo).unwrap();
            run_round(&mut b, &fed, &ldp).unwrap();
            assert_eq!(a.global, b.global);
        }
        assert!(a.personalized.is_empty());
    }

    #[test]
    fn smoothing_round_stores_personalized_models_for_the_selection() {
        let cfg = small_cfg(Algorithm::FedCeo);
        let (fed, mut st) = setup(&cfg);
        for t in 1..=cfg.rounds {
            run_round(&mut st, &fed, &cfg).unwrap();
            if t % cfg.interval == 0 {
                assert_eq!(st.personalized.keys().copied().collect::<Vec<_>>(), st.last_selected);
                let mean = average_models(&st.personalized.values().cloned().collect::<Vec<_>>()).unwrap();
                assert_eq!(mean, st.global);
                assert!(st.last_tnn.unwrap() >= 0.0);
            } else {
                assert!(st.last_tnn.is_none());
            }
        }
    }

    #[test]
    fn restart_uses_personalized_model_or_falls_back() {
        let mut cfg = small_cfg(Algorithm::FedCeo);
        cfg.interval = 2;
        let (fed, mut st) = setup(&cfg);
        run_round(&mut st, &fed, &cfg).unwrap();
        run_round(&mut st, &fed, &cfg).unwrap();
        let stored = st.personalized.clone();
        let global = st.global.clone();
        let mut probe = st.clone();
        run_round(&mut probe, &fed, &cfg).unwrap();
        for (i, &c) in probe.last_selected.iter().enumerate() {
            let start = stored.get(&c).unwrap_or(&global);
            let want = client_update(start, &fed.clients[c], &cfg, 3, c).unwrap();
            assert_eq!(probe.last_uploads[i], want);
        }
    }

    #[test]
    fn identical_uploads_smooth_to_the_truncated_average() {
        // With every client holding the same shard and no noise, all uploads
        // coincide and each personalized model is the truncated common model.
        let mut cfg = small_cfg(Algorithm::FedCeo);
        cfg.n_total = 3;
        cfg.interval = 1;
        cfg.rounds = 1;
        cfg.dp.sigma = 1e-300;
        cfg.batch_size = 1000;
        cfg.local_epochs = 1;
        let (base, st0) = setup(&cfg);
        let fed = Federation {
            clients: vec![base.clients[0].clone(); 3],
            train: base.train.clone(),
            test: base.test.clone(),
        };
        let mut st = st0.clone();
        run_round(&mut st, &fed, &cfg).unwrap();
        let ups = &st.last_uploads;
        // Noise and shuffle streams differ per client; at σ = 1e-300 with full
        // batches neither matters beyond rounding.
        let threshold = threshold_schedule(cfg.lambda, cfg.ratio, 1, 1).unwrap();
        let w: Array2<f64> = ups[0].layers()[0].weight.clone();
        let wc = w.mapv(|v| num_complex::Complex64::new(v, 0.0));
        let want = crate::tensor::truncated_svd_matrix(wc.view(), threshold / 3.0).unwrap();
        for m in st.personalized.values() {
            for (a, b) in m.layers()[0].weight.iter().zip(want.iter()) {
                assert!((a - b.re).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn partition_modes_feed_the_federation() {
        let mut cfg = small_cfg(Algorithm::LdpFedAvg);
        cfg.partition = PartitionMode::Dirichlet { alpha: 0.5 };
        let (fed, mut st) = setup(&cfg);
        assert_eq!(fed.clients.iter().map(Dataset::len).sum::<usize>(), fed.train.len());
        run_round(&mut st, &fed, &cfg).unwrap();
        cfg.model = Architecture::Mlp { hidden: 5, bias: false };
        let (fed, mut st) = setup(&cfg);
        run_round(&mut st, &fed, &cfg).unwrap();
    }

    #[test]
    fn noise_spreads_the_ensemble() {
        let spread = |sigma: f64| {
            let finals: Vec<Vec<f64>> = (0..20u64)
                .map(|seed| {
                    let mut cfg = small_cfg(Algorithm::LdpFedAvg);
                    cfg.rounds = 3;
                    cfg.dp.sigma = sigma;
                    cfg.seed = seed;
                    // Data and init stay fixed; only the noise and sampling streams move.
                    let fixed = RunConfig { seed: 0, ..cfg.clone() };
                    let fed = Federation::from_config(&fixed).unwrap();
                    let mut st = ServerState::new(&fixed, 4, 3).unwrap();
                    for _ in 0..cfg.rounds {
                        run_round(&mut st, &fed, &cfg).unwrap();
                    }
                    st.global.flatten()
                })
                .collect();
            let p = finals[0].len();
            let mut total = 0.0;
            for j in 0..p {
                let mean = finals.iter().map(|f| f[j]).sum::<f64>() / finals.len() as f64;
                total += finals.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / (finals.len() - 1) as f64;
            }
            (total / p as f64).sqrt()
        };
        let s: Vec<f64> = [0.5, 1.0, 2.0, 4.0].into_iter().map(spread).collect();
        assert!(s.windows(2).all(|w| w[1] > w[0]), "{s:?}");
    }
}
