use crate::error::{Error, Result};
use crate::hetgraph::EdgeType;

use super::{GnnMode, GnnModel, Gradients, SampleInput};

const SLOTS: usize = 3;
const ALL_SLOTS: [usize; SLOTS] = [0, 1, 2];

pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Binary cross entropy summed over classes, from logits:
/// `max(y,0) − z·y + ln(1 + e^{−|y|})` per class.
pub fn bce_loss(logits: &[f64], labels: &[f64]) -> f64 {
    debug_assert_eq!(logits.len(), labels.len());
    logits
        .iter()
        .zip(labels)
        .map(|(&y, &z)| (y.max(0.0) - z * y) + (-y.abs()).exp().ln_1p())
        .sum()
}

/// Mean of `[h ‖ g]` over `neighbors`; zeros of length `dim + 1` when empty.
pub fn aggregate_typed(dim: usize, neighbors: &[(&[f64], f64)]) -> Result<Vec<f64>> {
    if let Some((h, _)) = neighbors.iter().find(|(h, _)| h.len() != dim) {
        return Err(Error::Shape(format!(
            "neighbor vector of length {}, expected {dim}",
            h.len()
        )));
    }
    let mut out = vec![0.0; dim + 1];
    for (h, g) in neighbors {
        for (o, x) in out.iter_mut().zip(h.iter()) {
            *o += x;
        }
        out[dim] += g;
    }
    if !neighbors.is_empty() {
        let n = neighbors.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
    }
    Ok(out)
}

/// Encoder output computed with the tied, type-agnostic neighbor weights.
pub fn homogeneous_encode(model: &GnnModel, input: &SampleInput) -> Result<Vec<f64>> {
    let mut tied = model.clone();
    tied.hyper.mode = GnnMode::Homogeneous;
    tied.encode(input)
}

/// NaN passes through so the divergence guard can see it.
fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&x| if x > 0.0 || x.is_nan() { x } else { 0.0 }).collect()
}

/// Slot-wise means for one layer application plus the member counts.
struct Aggregate {
    means: [Vec<f64>; SLOTS],
    counts: [usize; SLOTS],
}

fn aggregate_slots<'a>(
    mode: GnnMode,
    dim: usize,
    items: impl Iterator<Item = (EdgeType, &'a [f64], f64)>,
) -> Aggregate {
    // Summing in a canonical order keeps the means bit-identical under any
    // permutation of the neighbor list.
    let mut items: Vec<_> = items.collect();
    items.sort_by(|a, b| {
        a.2.total_cmp(&b.2)
            .then_with(|| {
                a.1.iter()
                    .zip(b.1)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut means = [vec![0.0; dim + 1], vec![0.0; dim + 1], vec![0.0; dim + 1]];
    let mut counts = [0usize; SLOTS];
    for (t, h, g) in items {
        let s = match mode {
            GnnMode::Heterogeneous => t.index(),
            GnnMode::Homogeneous => 0,
        };
        for (o, x) in means[s].iter_mut().zip(h) {
            *o += x;
        }
        means[s][dim] += g;
        counts[s] += 1;
    }
    if mode == GnnMode::Homogeneous {
        counts = [counts[0]; SLOTS];
        means[1] = means[0].clone();
        means[2] = means[0].clone();
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        if c > 0 {
            m.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    Aggregate { means, counts }
}

/// Slots a neighbor of type `t` contributes to.
fn member_slots(mode: GnnMode, t: EdgeType) -> &'static [usize] {
    match (mode, t) {
        (GnnMode::Homogeneous, _) => &ALL_SLOTS,
        (GnnMode::Heterogeneous, EdgeType::Comm) => &ALL_SLOTS[0..1],
        (GnnMode::Heterogeneous, EdgeType::Sense) => &ALL_SLOTS[1..2],
        (GnnMode::Heterogeneous, EdgeType::Interference) => &ALL_SLOTS[2..3],
    }
}

/// Cached pre-activations of one sample's forward pass.
struct Trace {
    k_agg: Aggregate,
    k_z: Vec<f64>,
    hop_agg: Vec<Aggregate>,
    hop_z: Vec<Vec<f64>>,
    l2_agg: Aggregate,
    l2_z: Vec<f64>,
    /// Input of each head layer; `head_in[0]` is the embedding.
    head_in: Vec<Vec<f64>>,
    head_z: Vec<Vec<f64>>,
}

impl GnnModel {
    /// Index of the weight matrix used for neighbor slot `s` of a layer whose
    /// self block is `first`.
    fn slot_weight(&self, first: usize, s: usize) -> usize {
        match self.hyper.mode {
            GnnMode::Heterogeneous => first + 1 + s,
            GnnMode::Homogeneous => first + 1,
        }
    }

    fn check_input(&self, input: &SampleInput) -> Result<()> {
        let l = self.target_count;
        let bad = |v: &[f64]| v.len() != l;
        if bad(&input.features)
            || input
                .first_hop
                .iter()
                .any(|h| bad(&h.features) || h.second_hop.iter().any(|n| bad(&n.features)))
        {
            return Err(Error::Contract(format!(
                "input features do not have length L = {l} expected by the model"
            )));
        }
        Ok(())
    }

    fn layer(&self, first: usize, self_in: &[f64], agg: &Aggregate) -> Vec<f64> {
        let p = &self.params;
        let q = self.hyper.embedding_dim / 4;
        let mut z = vec![0.0; 4 * q];
        p.w[first].mul_vec_into(self_in, &mut z[..q]);
        for s in 0..SLOTS {
            p.w[self.slot_weight(first, s)].mul_vec_into(&agg.means[s], &mut z[q * (s + 1)..q * (s + 2)]);
        }
        z
    }

    /// Backpropagates through one concatenating layer. Returns the gradient
    /// with respect to the self input (when asked) and each slot mean.
    fn layer_backward(
        &self,
        first: usize,
        self_in: &[f64],
        agg: &Aggregate,
        z: &[f64],
        dh: &[f64],
        grads: &mut Gradients,
        want_self: bool,
    ) -> (Vec<f64>, [Vec<f64>; SLOTS]) {
        let p = &self.params;
        let q = self.hyper.embedding_dim / 4;
        let dz: Vec<f64> = dh.iter().zip(z).map(|(&d, &x)| if x > 0.0 { d } else { 0.0 }).collect();
        grads.w[first].add_outer(&dz[..q], self_in);
        let mut dself = Vec::new();
        if want_self {
            dself = vec![0.0; self_in.len()];
            p.w[first].tmul_vec_add(&dz[..q], &mut dself);
        }
        let daggs = ALL_SLOTS.map(|s| {
            let wi = self.slot_weight(first, s);
            let block = &dz[q * (s + 1)..q * (s + 2)];
            grads.w[wi].add_outer(block, &agg.means[s]);
            let mut d = vec![0.0; agg.means[s].len()];
            if agg.counts[s] > 0 {
                p.w[wi].tmul_vec_add(block, &mut d);
            }
            d
        });
        (dself, daggs)
    }

    fn trace(&self, input: &SampleInput) -> Result<Trace> {
        self.check_input(input)?;
        let mode = self.hyper.mode;
        let l = self.target_count;
        let d = self.hyper.embedding_dim;

        let k_agg = aggregate_slots(
            mode,
            l,
            input
                .first_hop
                .iter()
                .map(|n| (n.edge_type, n.features.as_slice(), n.weight)),
        );
        let k_z = self.layer(0, &input.features, &k_agg);
        let mut hop_agg = Vec::with_capacity(input.first_hop.len());
        let mut hop_z = Vec::with_capacity(input.first_hop.len());
        for v in &input.first_hop {
            let agg = aggregate_slots(
                mode,
                l,
                v.second_hop
                    .iter()
                    .map(|n| (n.edge_type, n.features.as_slice(), n.weight)),
            );
            hop_z.push(self.layer(0, &v.features, &agg));
            hop_agg.push(agg);
        }

        let hop_h: Vec<Vec<f64>> = hop_z.iter().map(|z| relu(z)).collect();
        let l2_agg = aggregate_slots(
            mode,
            d,
            input
                .first_hop
                .iter()
                .zip(&hop_h)
                .map(|(n, h)| (n.edge_type, h.as_slice(), n.weight)),
        );
        let l2_z = self.layer(4, &relu(&k_z), &l2_agg);

        let p = &self.params;
        let last = p.head.len() - 1;
        let mut head_in = vec![relu(&l2_z)];
        let mut head_z = Vec::with_capacity(p.head.len());
        for (i, (m, b)) in p.head.iter().zip(&p.bias).enumerate() {
            let mut z = vec![0.0; m.rows()];
            m.mul_vec_into(&head_in[i], &mut z);
            z.iter_mut().zip(b).for_each(|(x, b)| *x += b);
            if i < last {
                head_in.push(relu(&z));
            }
            head_z.push(z);
        }
        Ok(Trace {
            k_agg,
            k_z,
            hop_agg,
            hop_z,
            l2_agg,
            l2_z,
            head_in,
            head_z,
        })
    }

    /// Graph information vector h²_k (length λ₀).
    pub fn encode(&self, input: &SampleInput) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.head_in.swap_remove(0))
    }

    /// L+1 logits from an embedding.
    pub fn head_forward(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.hyper.embedding_dim {
            return Err(Error::Shape(format!(
                "embedding of length {}, expected {}",
                embedding.len(),
                self.hyper.embedding_dim
            )));
        }
        let p = &self.params;
        let last = p.head.len() - 1;
        let mut x = embedding.to_vec();
        for (i, (m, b)) in p.head.iter().zip(&p.bias).enumerate() {
            let mut z = vec![0.0; m.rows()];
            m.mul_vec_into(&x, &mut z);
            z.iter_mut().zip(b).for_each(|(x, b)| *x += b);
            x = if i < last { relu(&z) } else { z };
        }
        Ok(x)
    }

    pub fn logits(&self, input: &SampleInput) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.head_z.pop().expect("head has an output layer"))
    }

    /// Loss and exact gradients for one sample.
    pub fn backward(&self, input: &SampleInput, label: &[f64]) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros(&self.hyper, self.target_count);
        let loss = self.backward_into(input, label, &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds this sample's gradients into `grads` and returns its loss.
    pub fn backward_into(&self, input: &SampleInput, label: &[f64], grads: &mut Gradients) -> Result<f64> {
        if label.len() != self.target_count + 1 {
            return Err(Error::Shape(format!(
                "label of length {}, expected {}",
                label.len(),
                self.target_count + 1
            )));
        }
        let t = self.trace(input)?;
        let p = &self.params;
        let mode = self.hyper.mode;
        let d = self.hyper.embedding_dim;
        let last = p.head.len() - 1;
        let logits = &t.head_z[last];
        let loss = bce_loss(logits, label);

        let mut dx: Vec<f64> = logits.iter().zip(label).map(|(&y, &z)| sigmoid(y) - z).collect();
        for i in (0..=last).rev() {
            let dz: Vec<f64> = if i == last {
                dx
            } else {
                dx.iter()
                    .zip(&t.head_z[i])
                    .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                    .collect()
            };
            grads.bias[i].iter_mut().zip(&dz).for_each(|(g, d)| *g += d);
            grads.head[i].add_outer(&dz, &t.head_in[i]);
            dx = vec![0.0; t.head_in[i].len()];
            p.head[i].tmul_vec_add(&dz, &mut dx);
        }

        let h1k = relu(&t.k_z);
        let (dh1k, dl2) = self.layer_backward(4, &h1k, &t.l2_agg, &t.l2_z, &dx, grads, true);

        for (j, v) in input.first_hop.iter().enumerate() {
            let mut dh = vec![0.0; d];
            for &s in member_slots(mode, v.edge_type) {
                let n = t.l2_agg.counts[s] as f64;
                for (o, g) in dh.iter_mut().zip(&dl2[s][..d]) {
                    *o += g / n;
                }
            }
            self.layer_backward(0, &v.features, &t.hop_agg[j], &t.hop_z[j], &dh, grads, false);
        }
        self.layer_backward(0, &input.features, &t.k_agg, &t.k_z, &dh1k, grads, false);
        Ok(loss)
    }
}
