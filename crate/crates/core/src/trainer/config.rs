use crate::error::{Error, Result};

/// Hyper-parameters of an adaptation run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of student/teacher pairs; must match the checkpoint count.
    pub pairs: usize,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    /// Clusters per batch (P).
    pub batch_identities: usize,
    /// Samples per cluster (K_img).
    pub images_per_identity: usize,
    pub cluster_count: usize,
    pub knn_k: usize,
    pub beta: f64,
    pub lambda_gcc: f64,
    pub ema_decay: f64,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_epoch: usize,
    pub aug_noise_sigma: f64,
    pub aug_drop_prob: f64,
    pub kmeans_max_iters: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Desk-scale schedule: 20 epochs of 50 iterations, 100 clusters.
    pub fn desk() -> Self {
        Self {
            pairs: 1,
            epochs: 20,
            iters_per_epoch: 50,
            batch_identities: 16,
            images_per_identity: 4,
            cluster_count: 100,
            knn_k: 12,
            beta: 0.05,
            lambda_gcc: 0.6,
            ema_decay: 0.999,
            learning_rate: 3.5e-4,
            lr_decay_factor: 0.1,
            lr_decay_epoch: 20,
            aug_noise_sigma: 0.05,
            aug_drop_prob: 0.1,
            kmeans_max_iters: 100,
            seed: 0,
        }
    }

    /// Full-size schedule: 120 epochs of 400 iterations over 500 clusters.
    pub fn full_scale() -> Self {
        Self {
            epochs: 120,
            iters_per_epoch: 400,
            cluster_count: 500,
            ..Self::desk()
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_identities * self.images_per_identity
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.learning_rate * self.lr_decay_factor
        } else {
            self.learning_rate
        }
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.pairs == 0 {
            bad.push("pairs must be at least 1".to_string());
        }
        if self.batch_identities == 0 || self.images_per_identity == 0 || self.batch_size() < 2 {
            bad.push("batch_identities * images_per_identity must be at least 2".to_string());
        }
        if self.cluster_count == 0 {
            bad.push("cluster_count must be at least 1".to_string());
        }
        if self.knn_k == 0 {
            bad.push("knn_k must be at least 1".to_string());
        }
        if self.kmeans_max_iters == 0 {
            bad.push("kmeans_max_iters must be at least 1".to_string());
        }
        let positive = [
            ("beta", self.beta),
            ("learning_rate", self.learning_rate),
            ("lr_decay_factor", self.lr_decay_factor),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{k} must be positive and finite (got {v})"));
            }
        }
        for (k, v) in [("lambda_gcc", self.lambda_gcc), ("aug_noise_sigma", self.aug_noise_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{k} must be non-negative and finite (got {v})"));
            }
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            bad.push(format!("ema_decay must lie in [0, 1] (got {})", self.ema_decay));
        }
        if !(0.0..1.0).contains(&self.aug_drop_prob) {
            bad.push(format!("aug_drop_prob must lie in [0, 1) (got {})", self.aug_drop_prob));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(bad.join("; ")))
        }
    }

    pub const KEYS: [&'static str; 17] = [
        "pairs",
        "epochs",
        "iters_per_epoch",
        "batch_identities",
        "images_per_identity",
        "cluster_count",
        "knn_k",
        "beta",
        "lambda_gcc",
        "ema_decay",
        "learning_rate",
        "lr_decay_factor",
        "lr_decay_epoch",
        "aug_noise_sigma",
        "aug_drop_prob",
        "kmeans_max_iters",
        "seed",
    ];

    /// Every field as `(key, value)`, values in a form [`set`](Self::set)
    /// parses back exactly.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("pairs", self.pairs.to_string()),
            ("epochs", self.epochs.to_string()),
            ("iters_per_epoch", self.iters_per_epoch.to_string()),
            ("batch_identities", self.batch_identities.to_string()),
            ("images_per_identity", self.images_per_identity.to_string()),
            ("cluster_count", self.cluster_count.to_string()),
            ("knn_k", self.knn_k.to_string()),
            ("beta", format!("{:?}", self.beta)),
            ("lambda_gcc", format!("{:?}", self.lambda_gcc)),
            ("ema_decay", format!("{:?}", self.ema_decay)),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("lr_decay_factor", format!("{:?}", self.lr_decay_factor)),
            ("lr_decay_epoch", self.lr_decay_epoch.to_string()),
            ("aug_noise_sigma", format!("{:?}", self.aug_noise_sigma)),
            ("aug_drop_prob", format!("{:?}", self.aug_drop_prob)),
            ("kmeans_max_iters", self.kmeans_max_iters.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Sets one field from text. Unknown keys and unparsable values are
    /// reported as `Err` with a message naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn int(key: &str, v: &str) -> std::result::Result<usize, String> {
            v.parse().map_err(|_| format!("{key}: expected a non-negative integer, got {v:?}"))
        }
        fn float(key: &str, v: &str) -> std::result::Result<f64, String> {
            v.parse().map_err(|_| format!("{key}: expected a number, got {v:?}"))
        }
        let v = value.trim();
        match key {
            "pairs" => self.pairs = int(key, v)?,
            "epochs" => self.epochs = int(key, v)?,
            "iters_per_epoch" => self.iters_per_epoch = int(key, v)?,
            "batch_identities" => self.batch_identities = int(key, v)?,
            "images_per_identity" => self.images_per_identity = int(key, v)?,
            "cluster_count" => self.cluster_count = int(key, v)?,
            "knn_k" => self.knn_k = int(key, v)?,
            "beta" => self.beta = float(key, v)?,
            "lambda_gcc" => self.lambda_gcc = float(key, v)?,
            "ema_decay" => self.ema_decay = float(key, v)?,
            "learning_rate" => self.learning_rate = float(key, v)?,
            "lr_decay_factor" => self.lr_decay_factor = float(key, v)?,
            "lr_decay_epoch" => self.lr_decay_epoch = int(key, v)?,
            "aug_noise_sigma" => self.aug_noise_sigma = float(key, v)?,
            "aug_drop_prob" => self.aug_drop_prob = float(key, v)?,
            "kmeans_max_iters" => self.kmeans_max_iters = int(key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("seed: expected an unsigned integer, got {v:?}"))?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }
}
