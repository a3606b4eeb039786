//! Multinomial logistic regression, per-sample clipping and the
//! client/server update rules.

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::sampling::sample_fixed_batch;
use super::SimError;
use crate::accountant::ClientId;

/// Flat model parameters Θ.
///
/// For `classes` classes over `d` features the layout is one row of `d`
/// weights followed by a bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector<T> {
    weights: Vec<T>,
}

impl<T: Float> ModelVector<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, SimError> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(SimError::NonFinite);
        }
        Ok(ModelVector { weights })
    }

    pub fn zeros(dim: usize) -> Self {
        ModelVector { weights: vec![T::zero(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

/// Labelled points, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    labels: Vec<usize>,
    d: usize,
    classes: usize,
}

impl<T: Float> Dataset<T> {
    pub fn new(features: Vec<T>, labels: Vec<usize>, d: usize, classes: usize) -> Result<Self, SimError> {
        if labels.is_empty() {
            return Err(SimError::Config("dataset must be non-empty".into()));
        }
        if d == 0 || classes < 2 {
            return Err(SimError::Config("need d >= 1 and at least two classes".into()));
        }
        if features.len() != labels.len() * d {
            return Err(SimError::Dimension { expected: labels.len() * d, found: features.len() });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(SimError::Config(format!("label {y} out of range for {classes} classes")));
        }
        Ok(Dataset { features, labels, d, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Dimension of a model over this data.
    pub fn model_dim(&self) -> usize {
        self.classes * (self.d + 1)
    }

    pub fn point(&self, i: usize) -> (&[T], usize) {
        (&self.features[i * self.d..(i + 1) * self.d], self.labels[i])
    }
}

fn check_dim<T: Float>(model: &ModelVector<T>, data: &Dataset<T>) -> Result<(), SimError> {
    if model.dim() != data.model_dim() {
        return Err(SimError::Dimension { expected: data.model_dim(), found: model.dim() });
    }
    Ok(())
}

fn logits<T: Float>(model: &ModelVector<T>, x: &[T], classes: usize, out: &mut [T]) {
    let stride = x.len() + 1;
    for (k, o) in out.iter_mut().enumerate().take(classes) {
        let row = &model.weights[k * stride..(k + 1) * stride];
        *o = row[..x.len()].iter().zip(x).fold(row[x.len()], |acc, (&w, &xi)| acc + w * xi);
    }
}

/// Descent direction `−η ∇ℓ(Θ; x, y)` of the cross-entropy loss at one point.
pub fn descent_direction<T: Float>(model: &ModelVector<T>, x: &[T], y: usize, classes: usize, step_size: T) -> Vec<T> {
    let mut p = vec![T::zero(); classes];
    logits(model, x, classes, &mut p);
    let top = p.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in p.iter_mut() {
        *v = (*v - top).exp();
        total = total + *v;
    }
    let stride = x.len() + 1;
    let mut g = vec![T::zero(); classes * stride];
    for k in 0..classes {
        let mut r = p[k] / total;
        if k == y {
            r = r - T::one();
        }
        let scale = -step_size * r;
        let row = &mut g[k * stride..(k + 1) * stride];
        for (gi, &xi) in row.iter_mut().zip(x) {
            *gi = scale * xi;
        }
        row[x.len()] = scale;
    }
    g
}

pub fn l2_norm<T: Float>(v: &[T]) -> T {
    // scaled to avoid overflow of the squares
    let top = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if top == T::zero() || !top.is_finite() {
        return top;
    }
    top * v.iter().fold(T::zero(), |s, &x| s + (x / top) * (x / top)).sqrt()
}

/// `g · min(1, clip/‖g‖₂)`.
pub fn clip_gradient<T: Float>(g: &[T], clip: T) -> Vec<T> {
    let norm = l2_norm(g);
    if norm <= clip {
        return g.to_vec();
    }
    let factor = clip / norm;
    g.iter().map(|&x| x * factor).collect()
}

/// A client's local data and privacy parameters.
#[derive(Debug, Clone)]
pub struct ClientState<T> {
    pub id: ClientId,
    pub dataset: Dataset<T>,
    pub batch_size: usize,
    pub clip: T,
    pub sigma: T,
    pub step_size: T,
}

impl<T: Float> ClientState<T> {
    pub fn new(id: ClientId, dataset: Dataset<T>, batch_size: usize, clip: T, sigma: T, step_size: T) -> Result<Self, SimError> {
        if batch_size == 0 || batch_size > dataset.len() {
            return Err(SimError::Batch { batch_size, dataset_size: dataset.len() });
        }
        if clip <= T::zero() || !clip.is_finite() {
            return Err(SimError::Config("clip must be finite and > 0".into()));
        }
        if sigma < T::zero() || !sigma.is_finite() {
            return Err(SimError::Config("sigma must be finite and >= 0".into()));
        }
        Ok(ClientState { id, dataset, batch_size, clip, sigma, step_size })
    }

    /// `|B| / |D|`.
    pub fn sampling_ratio(&self) -> f64 {
        self.batch_size as f64 / self.dataset.len() as f64
    }
}

/// What a client sends back, plus instrumentation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate<T> {
    pub update: Vec<T>,
    /// Norm of the clipped batch average before noise.
    pub clipped_norm: T,
    pub batch_size: usize,
}

/// Mean of the clipped per-sample descent directions over `batch`.
pub fn clipped_batch_mean<T: Float>(client: &ClientState<T>, model: &ModelVector<T>, batch: &[usize]) -> Result<Vec<T>, SimError> {
    check_dim(model, &client.dataset)?;
    let classes = client.dataset.classes();
    let mut sum = vec![T::zero(); model.dim()];
    for &i in batch {
        let (x, y) = client.dataset.point(i);
        let g = clip_gradient(&descent_direction(model, x, y, classes, client.step_size), client.clip);
        for (s, gi) in sum.iter_mut().zip(g) {
            *s = *s + gi;
        }
    }
    let n = T::from(batch.len()).expect("batch size fits the scalar type");
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// `(1/|B|) Σ_{i∈B} clip(f(Θ, d_i)) + Z`, `Z ~ N(0, (Cσ/|B|)² I)`, over a
/// fresh fixed-size batch.
pub fn client_update<T: Float, R: Rng + ?Sized>(
    client: &ClientState<T>,
    model: &ModelVector<T>,
    rng: &mut R,
) -> Result<ClientUpdate<T>, SimError> {
    check_dim(model, &client.dataset)?;
    let batch = sample_fixed_batch(client.dataset.len(), client.batch_size, rng)?;
    let mean = clipped_batch_mean(client, model, &batch)?;
    let clipped_norm = l2_norm(&mean);
    let n = T::from(batch.len()).expect("batch size fits the scalar type");
    let std = client.clip * client.sigma / n;
    let update = if std > T::zero() {
        mean.into_iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + std * T::from(z).expect("normal draw fits the scalar type")
            })
            .collect()
    } else {
        mean
    };
    Ok(ClientUpdate { update, clipped_norm, batch_size: batch.len() })
}

/// `Θ + (1/m_t) Σ_j u_j`, summing in the given order.
pub fn server_update<T: Float>(model: &ModelVector<T>, updates: &[Vec<T>], m_t: usize) -> Result<ModelVector<T>, SimError> {
    if m_t == 0 || updates.len() != m_t {
        return Err(SimError::UpdateCount { expected: m_t, found: updates.len() });
    }
    let mut sum = vec![T::zero(); model.dim()];
    for u in updates {
        if u.len() != model.dim() {
            return Err(SimError::Dimension { expected: model.dim(), found: u.len() });
        }
        for (s, &x) in sum.iter_mut().zip(u) {
            *s = *s + x;
        }
    }
    let m = T::from(m_t).expect("client count fits the scalar type");
    ModelVector::new(model.weights.iter().zip(sum).map(|(&w, s)| w + s / m).collect())
}

/// Predicted class (ties to the lowest index).
pub fn predict<T: Float>(model: &ModelVector<T>, x: &[T], classes: usize) -> usize {
    let mut z = vec![T::zero(); classes];
    logits(model, x, classes, &mut z);
    let mut best = 0;
    for k in 1..classes {
        if z[k] > z[best] {
            best = k;
        }
    }
    best
}

/// Fraction of points classified correctly, pooled over all datasets.
pub fn accuracy<T: Float>(model: &ModelVector<T>, datasets: &[&Dataset<T>]) -> f64 {
    let (mut right, mut total) = (0usize, 0usize);
    for data in datasets {
        for i in 0..data.len() {
            let (x, y) = data.point(i);
            right += usize::from(predict(model, x, data.classes()) == y);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        right as f64 / total as f64
    }
}
