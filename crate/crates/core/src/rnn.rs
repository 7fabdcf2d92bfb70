//! Reading a grown graph as a discrete-time recurrent network.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{diameter, GrownGraph};

/// Input and output neurons of a network, in the order observations are
/// injected and actions are read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoAssignment {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// Inputs are the `d_in` nodes with the smallest in-degree (ties by id).
/// Outputs are the latest-created `d_out` nodes that are not inputs, listed
/// in ascending id order.
pub fn select_io(graph: &GrownGraph, d_in: usize, d_out: usize) -> Result<IoAssignment> {
    let n = graph.node_count();
    if d_in + d_out > n {
        return Err(Error::GraphTooSmall {
            needed: d_in + d_out,
            available: n,
        });
    }
    let in_degree = graph.in_degrees();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&id| (in_degree[id], id));
    let inputs: Vec<usize> = order[..d_in].to_vec();
    let mut is_input = vec![false; n];
    for &id in &inputs {
        is_input[id] = true;
    }
    let mut outputs: Vec<usize> = (0..n).rev().filter(|&id| !is_input[id]).take(d_out).collect();
    outputs.reverse();
    Ok(IoAssignment { inputs, outputs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// `x <- x + f(W x)`
    #[default]
    Accumulation,
    /// `x <- f(W x)`
    Replacement,
}

impl FromStr for UpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accumulation" => Ok(UpdateMode::Accumulation),
            "replacement" => Ok(UpdateMode::Replacement),
            other => Err(Error::Config(format!("unknown update mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Logistic,
    Relu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-v).exp()),
            Activation::Relu => v.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnConfig {
    pub mode: UpdateMode,
    pub activation: Activation,
    /// Steps added on top of the graph diameter.
    pub extra_steps: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            mode: UpdateMode::Accumulation,
            activation: Activation::Tanh,
            extra_steps: 0,
        }
    }
}

/// Sparse weights plus propagation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// For every node, the `(source, weight)` pairs of its incoming edges,
    /// sorted by source.
    incoming: Vec<Vec<(usize, f64)>>,
    mode: UpdateMode,
    activation: Activation,
    steps: usize,
}

impl Network {
    /// Uses `diameter + extra_steps` propagation steps, at least one.
    pub fn from_graph(graph: &GrownGraph, config: &RnnConfig) -> Self {
        let steps = (diameter(graph) + config.extra_steps).max(1);
        Self::with_steps(graph, config.mode, config.activation, steps)
    }

    pub fn with_steps(
        graph: &GrownGraph,
        mode: UpdateMode,
        activation: Activation,
        steps: usize,
    ) -> Self {
        let mut incoming = vec![Vec::new(); graph.node_count()];
        for e in graph.edges() {
            incoming[e.target].push((e.source, e.weight));
        }
        for list in &mut incoming {
            list.sort_by_key(|&(s, _)| s);
        }
        Network {
            incoming,
            mode,
            activation,
            steps: steps.max(1),
        }
    }

    pub fn node_count(&self) -> usize {
        self.incoming.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mode(&self) -> UpdateMode {
        self.mode
    }

    /// Iterate the update `steps` times from `x0`.
    pub fn propagate(&self, x0: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != self.node_count() {
            return Err(Error::Contract(format!(
                "state has {} entries, network has {} nodes",
                x0.len(),
                self.node_count()
            )));
        }
        let mut x = x0.to_vec();
        let mut next = vec![0.0; x.len()];
        for _ in 0..self.steps {
            for (j, list) in self.incoming.iter().enumerate() {
                let drive: f64 = list.iter().map(|&(i, w)| w * x[i]).sum();
                let update = self.activation.apply(drive);
                next[j] = match self.mode {
                    UpdateMode::Accumulation => x[j] + update,
                    UpdateMode::Replacement => update,
                };
            }
            std::mem::swap(&mut x, &mut next);
        }
        Ok(x)
    }
}

/// A network wired to an environment's observation and action sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    network: Network,
    io: IoAssignment,
}

impl Controller {
    pub fn new(graph: &GrownGraph, d_in: usize, d_out: usize, config: &RnnConfig) -> Result<Self> {
        let io = select_io(graph, d_in, d_out)?;
        Ok(Controller {
            network: Network::from_graph(graph, config),
            io,
        })
    }

    pub fn io(&self) -> &IoAssignment {
        &self.io
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Fresh zero state with the observation on the inputs, propagated, then
    /// read from the outputs.
    pub fn act(&self, observation: &[f64]) -> Result<Vec<f64>> {
        act(&self.network, &self.io, observation)
    }
}

pub fn act(network: &Network, io: &IoAssignment, observation: &[f64]) -> Result<Vec<f64>> {
    if observation.len() != io.inputs.len() {
        return Err(Error::Contract(format!(
            "observation has {} entries, network has {} inputs",
            observation.len(),
            io.inputs.len()
        )));
    }
    let mut x0 = vec![0.0; network.node_count()];
    for (&node, &value) in io.inputs.iter().zip(observation) {
        x0[node] = value;
    }
    let x = network.propagate(&x0)?;
    Ok(io.outputs.iter().map(|&node| x[node]).collect())
}

/// Index of the largest activation; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
