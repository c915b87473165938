use serde::{Deserialize, Serialize};

use super::env::{Action, CarState};
use crate::error::{invalid_input, Result};
use crate::nn::{Activation, Architecture, Network, ParamVector, Tensor2D};
use crate::rng::Rng;

pub const HIDDEN: usize = 64;
pub const NUM_ACTIONS: usize = 3;

/// Position and velocity rescaled to roughly unit range.
pub fn encode_state(s: &CarState) -> [f64; 2] {
    [(s.position + 0.3) / 0.9, s.velocity / 0.07]
}

pub fn encode_states(states: &[CarState]) -> Tensor2D {
    let data = states.iter().flat_map(encode_state).collect();
    Tensor2D::from_vec(states.len(), 2, data).expect("finite encoded states")
}

/// Dueling action-value network.
///
/// Stored as a two-layer dense network `2 → 64 (relu) → 4`. Output 0 is the mean head,
/// outputs 1..4 are the raw centered head, re-centered before combination.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    net: Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QHeads {
    pub mean: f64,
    pub centered: [f64; NUM_ACTIONS],
}

impl QHeads {
    fn from_raw(raw: &[f64]) -> Self {
        let m = (raw[1] + raw[2] + raw[3]) / NUM_ACTIONS as f64;
        Self {
            mean: raw[0],
            centered: [raw[1] - m, raw[2] - m, raw[3] - m],
        }
    }

    pub fn q(&self) -> [f64; NUM_ACTIONS] {
        self.centered.map(|c| self.mean + c)
    }
}

impl QNetwork {
    pub fn architecture() -> Architecture {
        Architecture {
            input: 2,
            hidden: vec![HIDDEN],
            output: NUM_ACTIONS + 1,
        }
    }

    pub fn new(net: Network) -> Result<Self> {
        let ok = net.layers().len() == 2
            && net.input_dim() == 2
            && net.output_dim() == NUM_ACTIONS + 1
            && net.layers()[0].activation == Activation::Relu
            && net.layers()[1].activation == Activation::Identity;
        if !ok {
            return Err(invalid_input(
                "Q-network must be 2 → hidden (relu) → 4 (identity)",
            ));
        }
        Ok(Self { net })
    }

    pub fn init(rng: &mut Rng) -> Result<Self> {
        Self::new(Network::init(&Self::architecture(), rng)?)
    }

    pub fn zeros() -> Self {
        let arch = Self::architecture();
        let mut net =
            Network::init(&arch, &mut crate::rng::rng_for(0, 0)).expect("valid architecture");
        net.set_params(&ParamVector::zeros(net.param_count()))
            .expect("matching length");
        Self { net }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn params(&self) -> ParamVector {
        self.net.params()
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        self.net.set_params(p)
    }

    pub fn heads(&self, s: &CarState) -> Result<QHeads> {
        if !s.in_bounds() {
            return Err(invalid_input(format!("state out of bounds: {s:?}")));
        }
        let raw = self.net.forward(&encode_states(std::slice::from_ref(s)))?;
        Ok(QHeads::from_raw(raw.row(0)))
    }

    /// Q-values for a batch, one row per state.
    pub fn q_batch(&self, states: &[CarState]) -> Result<Tensor2D> {
        let raw = self.net.forward(&encode_states(states))?;
        Ok(combine(&raw))
    }

    /// Loss and parameter gradient for a closure over the batch Q-values.
    pub fn grad<F>(&self, states: &[CarState], loss: F) -> Result<(f64, ParamVector)>
    where
        F: FnOnce(&Tensor2D) -> Result<(f64, Tensor2D)>,
    {
        crate::nn::grad(&self.net, &encode_states(states), |raw| {
            let (value, dq) = loss(&combine(raw))?;
            Ok((value, uncombine(&dq)))
        })
    }
}

fn combine(raw: &Tensor2D) -> Tensor2D {
    let mut q = Tensor2D::zeros(raw.rows(), NUM_ACTIONS);
    for i in 0..raw.rows() {
        q.row_mut(i)
            .copy_from_slice(&QHeads::from_raw(raw.row(i)).q());
    }
    q
}

/// Chain rule through the mean/centered combination.
fn uncombine(dq: &Tensor2D) -> Tensor2D {
    let mut d = Tensor2D::zeros(dq.rows(), NUM_ACTIONS + 1);
    for i in 0..dq.rows() {
        let g = dq.row(i);
        let total: f64 = g.iter().sum();
        let row = d.row_mut(i);
        row[0] = total;
        for a in 0..NUM_ACTIONS {
            row[a + 1] = g[a] - total / NUM_ACTIONS as f64;
        }
    }
    d
}

pub fn q_forward(qnet: &QNetwork, s: &CarState) -> Result<[f64; NUM_ACTIONS]> {
    Ok(qnet.heads(s)?.q())
}

/// Greedy action; ties resolve to the lowest action index.
pub fn greedy_action(q: &[f64]) -> Action {
    Action::from_index(crate::nn::argmax(q))
}
