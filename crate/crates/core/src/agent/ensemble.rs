use serde::{Deserialize, Serialize};

use super::{export_adam, export_tensors, import_adam, import_tensors, ParamMap};
use crate::buffer::Batch;
use crate::error::{Error, Result};
use crate::nets::{Mlp, MlpSpec};
use crate::rng::Rng;
use crate::tensor::{Adam, AdamConfig, Axis, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    /// Elementwise minimum across members (min-clipping).
    Min,
    Mean,
}

/// Reduces an `N×batch` matrix of member estimates column by column.
pub fn reduce_ensemble(kind: Reduce, q_values: &Tensor) -> Result<Vec<f64>> {
    if q_values.rank() != 2 || q_values.rows() == 0 {
        return Err(Error::Shape {
            op: "reduce_ensemble",
            lhs: q_values.shape().to_vec(),
            rhs: vec![],
        });
    }
    let (n, b) = (q_values.rows(), q_values.cols());
    Ok((0..b)
        .map(|j| {
            let column = (0..n).map(|i| q_values.data()[i * b + j]);
            match kind {
                Reduce::Min => column.fold(f64::INFINITY, f64::min),
                Reduce::Mean => column.sum::<f64>() / n as f64,
            }
        })
        .collect())
}

/// `target ← tau·online + (1 − tau)·target` for every tensor.
pub fn polyak_update(online: &[Tensor], target: &mut [Tensor], tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("polyak rate {tau} outside [0, 1]")));
    }
    if online.len() != target.len() {
        return Err(Error::Length("polyak parameter lists differ".into()));
    }
    for (o, t) in online.iter().zip(target.iter()) {
        if o.shape() != t.shape() {
            return Err(Error::Shape {
                op: "polyak_update",
                lhs: o.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
    }
    for (o, t) in online.iter().zip(target.iter_mut()) {
        for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}

/// `N` Q-networks over `[state | action]`, their target copies, and one
/// optimizer over all members.
#[derive(Clone, Debug)]
pub struct CriticEnsemble {
    members: Vec<Mlp>,
    targets: Vec<Mlp>,
    reduce: Reduce,
    optimizer: Adam,
}

impl CriticEnsemble {
    pub fn new(
        spec: MlpSpec,
        n: usize,
        reduce: Reduce,
        adam: AdamConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let members = (0..n)
            .map(|_| Mlp::init(spec.clone(), rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members, reduce, adam)
    }

    /// Targets start as exact copies of the members.
    pub fn from_members(members: Vec<Mlp>, reduce: Reduce, adam: AdamConfig) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Config("a critic ensemble needs at least one member".into()));
        };
        if members.iter().any(|m| m.spec() != first.spec()) {
            return Err(Error::Network("ensemble members must share one spec".into()));
        }
        let flat: Vec<Tensor> = members.iter().flat_map(|m| m.params().to_vec()).collect();
        Ok(Self {
            targets: members.clone(),
            optimizer: Adam::new(adam, &flat),
            members,
            reduce,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn reduce_kind(&self) -> Reduce {
        self.reduce
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Mlp] {
        &mut self.members
    }

    pub fn targets(&self) -> &[Mlp] {
        &self.targets
    }

    pub fn targets_mut(&mut self) -> &mut [Mlp] {
        &mut self.targets
    }

    fn joint_input(states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let s = g.constant(states.clone())?;
        let a = g.constant(actions.clone())?;
        let x = g.concat_cols(s, a)?;
        Ok(g.value(x).clone())
    }

    fn evaluate(nets: &[Mlp], states: &Tensor, actions: &Tensor) -> Result<Vec<Tensor>> {
        let x = Self::joint_input(states, actions)?;
        nets.iter().map(|n| n.predict(&x)).collect()
    }

    /// Online estimates, one `n×1` tensor per member.
    pub fn q_values(&self, states: &Tensor, actions: &Tensor) -> Result<Vec<Tensor>> {
        Self::evaluate(&self.members, states, actions)
    }

    pub fn target_q_values(&self, states: &Tensor, actions: &Tensor) -> Result<Vec<Tensor>> {
        Self::evaluate(&self.targets, states, actions)
    }

    /// Aggregates equally shaped member outputs.
    pub fn reduce_values(&self, values: &[Tensor]) -> Result<Tensor> {
        let b = values[0].len();
        let mut stacked = Vec::with_capacity(values.len() * b);
        for v in values {
            stacked.extend_from_slice(v.data());
        }
        let reduced = reduce_ensemble(self.reduce, &Tensor::matrix(values.len(), b, stacked)?)?;
        Tensor::new(values[0].shape().to_vec(), reduced)
    }

    /// Reduced target-network estimate at `(states, actions)`, `n×1`.
    pub fn target_reduced(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        let values = self.target_q_values(states, actions)?;
        self.reduce_values(&values)
    }

    /// Member estimates inside `g` with parameters held constant, so
    /// gradients reach only `states`/`actions`.
    pub fn q_graph(&self, g: &mut Graph, states: Var, actions: Var) -> Result<Vec<Var>> {
        let x = g.concat_cols(states, actions)?;
        self.members.iter().map(|m| m.forward_frozen(g, x)).collect()
    }

    pub fn reduce_graph(&self, g: &mut Graph, qs: &[Var]) -> Result<Var> {
        let mut acc = qs[0];
        for &q in &qs[1..] {
            acc = match self.reduce {
                Reduce::Min => g.minimum(acc, q)?,
                Reduce::Mean => g.add(acc, q)?,
            };
        }
        if self.reduce == Reduce::Mean && qs.len() > 1 {
            acc = g.scale(acc, 1.0 / qs.len() as f64)?;
        }
        Ok(acc)
    }

    /// `Σ_i mean((Q_i(s, a) − y)²)` with trainable member parameters.
    /// Returns the loss and each member's parameter vars.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        states: &Tensor,
        actions: &Tensor,
        targets: &Tensor,
    ) -> Result<(Var, Vec<Vec<Var>>)> {
        let vars = self
            .members
            .iter()
            .map(|m| m.register(g))
            .collect::<Result<Vec<_>>>()?;
        let loss = self.loss_graph_with(g, &vars, states, actions, targets)?;
        Ok((loss, vars))
    }

    /// Same loss over already registered member parameters.
    pub fn loss_graph_with(
        &self,
        g: &mut Graph,
        member_vars: &[Vec<Var>],
        states: &Tensor,
        actions: &Tensor,
        targets: &Tensor,
    ) -> Result<Var> {
        if member_vars.len() != self.members.len() {
            return Err(Error::Length(format!(
                "{} var sets for {} members",
                member_vars.len(),
                self.members.len()
            )));
        }
        let x = g.constant(Self::joint_input(states, actions)?)?;
        let y = g.constant(targets.clone())?;
        let mut total = None;
        for (m, vars) in self.members.iter().zip(member_vars) {
            let q = m.forward_with(g, vars, x)?;
            let diff = g.sub(q, y)?;
            let sq = g.square(diff)?;
            let mse = g.mean(sq, Axis::All)?;
            total = Some(match total {
                Some(t) => g.add(t, mse)?,
                None => mse,
            });
        }
        Ok(total.expect("non-empty ensemble"))
    }

    /// One optimizer step on the regression loss towards `targets`.
    pub fn fit(&mut self, batch: &Batch, targets: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let (loss, vars) = self.loss_graph(&mut g, &batch.states, &batch.actions, targets)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        let flat_vars: Vec<Var> = vars.into_iter().flatten().collect();
        let flat_grads = grads.collect(&flat_vars);
        let mut flat_params: Vec<Tensor> =
            self.members.iter().flat_map(|m| m.params().to_vec()).collect();
        self.optimizer.step(&mut flat_params, &flat_grads)?;
        let mut it = flat_params.into_iter();
        for m in &mut self.members {
            for p in m.params_mut() {
                *p = it.next().expect("same count");
            }
        }
        Ok(value)
    }

    pub fn polyak(&mut self, tau: f64) -> Result<()> {
        for (m, t) in self.members.iter().zip(&mut self.targets) {
            polyak_update(m.params(), t.params_mut(), tau)?;
        }
        Ok(())
    }

    pub fn hard_update(&mut self) {
        self.targets = self.members.clone();
    }

    pub fn export(&self, prefix: &str, out: &mut ParamMap) {
        for (j, (m, t)) in self.members.iter().zip(&self.targets).enumerate() {
            export_tensors(&format!("{prefix}.q{j}"), m.params(), out);
            export_tensors(&format!("{prefix}.target{j}"), t.params(), out);
        }
        export_adam(&format!("{prefix}.adam"), &self.optimizer, out);
    }

    pub fn import(&mut self, prefix: &str, src: &ParamMap) -> Result<()> {
        for (j, (m, t)) in self.members.iter_mut().zip(&mut self.targets).enumerate() {
            import_tensors(&format!("{prefix}.q{j}"), m.params_mut(), src)?;
            import_tensors(&format!("{prefix}.target{j}"), t.params_mut(), src)?;
        }
        import_adam(&format!("{prefix}.adam"), &mut self.optimizer, src)
    }
}
