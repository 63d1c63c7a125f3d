//! SAC extended with an ensemble-disagreement exploration bonus. The
//! actor loss and the Bellman target are the only overridden behaviors;
//! the predictor is trained by one extra call per learner step.

use std::cell::RefCell;
use std::rc::Rc;

use crate::agent::{
    bellman_backup, export_adam, export_tensors, import_adam, import_tensors, ActMode, Actor,
    ActorOutput, Critic, CriticEnsemble, Extension, LossReport, ParamMap, TargetContext,
};
use crate::algo::sac::{SacActor, SacCritic};
use crate::buffer::Batch;
use crate::error::{Error, Result};
use crate::nets::{Activation, Head, Mlp, MlpSpec};
use crate::rng::Rng;
use crate::tensor::{Adam, AdamConfig, Axis, Graph, Tensor, Var};

/// Per-sample bonus `b(s, a) ≥ 0`.
pub trait ExplorationBonus {
    /// `n×1` bonus for plain tensors.
    fn bonus(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor>;

    /// `n×1` bonus inside `g` with all bonus parameters held constant.
    fn bonus_graph(&self, g: &mut Graph, states: Var, actions: Var) -> Result<Var>;
}

/// `M` frozen random feature networks and one trained predictor over
/// `[state | action]`.
#[derive(Clone, Debug)]
pub struct DrndBonus {
    targets: Vec<Mlp>,
    predictor: Mlp,
    optimizer: Adam,
    rng: Rng,
}

pub type SharedBonus = Rc<RefCell<DrndBonus>>;

impl DrndBonus {
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        feature_dim: usize,
        m: usize,
        adam: AdamConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let spec = MlpSpec::new(input_dim, hidden, feature_dim, Activation::Relu, Head::Plain);
        let targets = (0..m)
            .map(|_| Mlp::init(spec.clone(), rng))
            .collect::<Result<Vec<_>>>()?;
        let predictor = Mlp::init(spec, rng)?;
        Self::from_parts(targets, predictor, adam, Rng::seed_from(rng.next_u64()))
    }

    pub fn from_parts(targets: Vec<Mlp>, predictor: Mlp, adam: AdamConfig, rng: Rng) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Config("the bonus needs at least one target network".into()));
        }
        if targets.iter().any(|t| t.spec() != predictor.spec()) {
            return Err(Error::Network("bonus networks must share one spec".into()));
        }
        Ok(Self {
            optimizer: Adam::new(adam, predictor.params()),
            targets,
            predictor,
            rng,
        })
    }

    pub fn shared(self) -> SharedBonus {
        Rc::new(RefCell::new(self))
    }

    pub fn targets(&self) -> &[Mlp] {
        &self.targets
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    fn joint(g: &mut Graph, states: &Tensor, actions: &Tensor) -> Result<Var> {
        let s = g.constant(states.clone())?;
        let a = g.constant(actions.clone())?;
        g.concat_cols(s, a)
    }

    /// `mean_j ‖f_pred(x_i) − f_j(x_i)‖²` with `j` drawn per sample,
    /// differentiable in the predictor `vars`.
    pub fn predictor_loss(
        &self,
        g: &mut Graph,
        vars: &[Var],
        x: Var,
        choice: &[usize],
    ) -> Result<Var> {
        let n = g.shape(x)[0];
        if choice.len() != n {
            return Err(Error::Length(format!("{} target choices for {n} samples", choice.len())));
        }
        let pred = self.predictor.forward_with(g, vars, x)?;
        let k = g.shape(pred)[1];
        let xv = g.value(x).clone();
        let mut picked = vec![0.0; n * k];
        for (j, t) in self.targets.iter().enumerate() {
            let f = t.predict(&xv)?;
            for (i, _) in choice.iter().enumerate().filter(|(_, &c)| c == j) {
                picked[i * k..(i + 1) * k].copy_from_slice(f.row(i));
            }
        }
        let target = g.constant(Tensor::matrix(n, k, picked)?)?;
        let diff = g.sub(pred, target)?;
        let sq = g.square(diff)?;
        let per_sample = g.sum(sq, Axis::Cols)?;
        g.mean(per_sample, Axis::All)
    }

    /// One predictor step on the batch's `(s, a)` pairs.
    pub fn update(&mut self, states: &Tensor, actions: &Tensor) -> Result<f64> {
        let choice: Vec<usize> = (0..states.rows())
            .map(|_| self.rng.below(self.targets.len()))
            .collect();
        let mut g = Graph::new();
        let x = Self::joint(&mut g, states, actions)?;
        let vars = self.predictor.register(&mut g)?;
        let loss = self.predictor_loss(&mut g, &vars, x, &choice)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        self.optimizer
            .step(self.predictor.params_mut(), &grads.collect(&vars))?;
        Ok(value)
    }

    fn export(&self, out: &mut ParamMap) {
        export_tensors("bonus.predictor", self.predictor.params(), out);
        for (j, t) in self.targets.iter().enumerate() {
            export_tensors(&format!("bonus.target{j}"), t.params(), out);
        }
        export_adam("bonus.adam", &self.optimizer, out);
    }

    fn import(&mut self, src: &ParamMap) -> Result<()> {
        import_tensors("bonus.predictor", self.predictor.params_mut(), src)?;
        for (j, t) in self.targets.iter_mut().enumerate() {
            import_tensors(&format!("bonus.target{j}"), t.params_mut(), src)?;
        }
        import_adam("bonus.adam", &mut self.optimizer, src)
    }
}

impl ExplorationBonus for DrndBonus {
    fn bonus(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let s = g.constant(states.clone())?;
        let a = g.constant(actions.clone())?;
        let b = self.bonus_graph(&mut g, s, a)?;
        Ok(g.value(b).clone())
    }

    /// Feature-averaged `(f_pred − μ)² + Var_j f_j` with `μ` the mean target
    /// feature and the population variance across targets.
    fn bonus_graph(&self, g: &mut Graph, states: Var, actions: Var) -> Result<Var> {
        let x = g.concat_cols(states, actions)?;
        let m = self.targets.len() as f64;
        let feats = self
            .targets
            .iter()
            .map(|t| t.forward_frozen(g, x))
            .collect::<Result<Vec<_>>>()?;
        let mut sum = feats[0];
        for &f in &feats[1..] {
            sum = g.add(sum, f)?;
        }
        let mu = g.scale(sum, 1.0 / m)?;
        let mut var = None;
        for &f in &feats {
            let d = g.sub(f, mu)?;
            let sq = g.square(d)?;
            var = Some(match var {
                Some(v) => g.add(v, sq)?,
                None => sq,
            });
        }
        let var = g.scale(var.expect("non-empty"), 1.0 / m)?;
        let pred = self.predictor.forward_frozen(g, x)?;
        let err = g.sub(pred, mu)?;
        let err_sq = g.square(err)?;
        let total = g.add(err_sq, var)?;
        g.mean(total, Axis::Cols)
    }
}

impl ExplorationBonus for SharedBonus {
    fn bonus(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        self.borrow().bonus(states, actions)
    }

    fn bonus_graph(&self, g: &mut Graph, states: Var, actions: Var) -> Result<Var> {
        self.borrow().bonus_graph(g, states, actions)
    }
}

/// SAC actor whose loss adds `lambda_actor·mean b(s, ã)`.
pub struct DrndActor {
    pub sac: SacActor,
    bonus: SharedBonus,
    pub lambda_actor: f64,
}

impl DrndActor {
    pub fn new(sac: SacActor, bonus: SharedBonus, lambda_actor: f64) -> Self {
        Self {
            sac,
            bonus,
            lambda_actor,
        }
    }
}

impl Actor for DrndActor {
    fn act(&self, states: &Tensor, mode: ActMode, rng: &mut Rng) -> Result<Tensor> {
        self.sac.act(states, mode, rng)
    }

    fn target_context(&self, next_states: &Tensor, rng: &mut Rng) -> Result<TargetContext> {
        self.sac.target_context(next_states, rng)
    }

    fn params(&self) -> &[Tensor] {
        self.sac.params()
    }

    fn loss(
        &self,
        g: &mut Graph,
        params: &[Var],
        states: &Tensor,
        critics: &CriticEnsemble,
        rng: &mut Rng,
    ) -> Result<(Var, ActorOutput)> {
        let (loss, out) = self.sac.loss(g, params, states, critics, rng)?;
        let s = g.constant(states.clone())?;
        let b = self.bonus.bonus_graph(g, s, out.action)?;
        let mean_b = g.mean(b, Axis::All)?;
        let weighted = g.scale(mean_b, self.lambda_actor)?;
        Ok((g.add(loss, weighted)?, out))
    }

    fn apply_gradients(&mut self, grads: &[Tensor]) -> Result<()> {
        self.sac.apply_gradients(grads)
    }

    fn after_update(&mut self, g: &Graph, out: &ActorOutput) -> Result<LossReport> {
        self.sac.after_update(g, out)
    }

    fn export(&self, prefix: &str, out: &mut ParamMap) {
        self.sac.export(prefix, out)
    }

    fn import(&mut self, prefix: &str, src: &ParamMap) -> Result<()> {
        self.sac.import(prefix, src)
    }
}

/// SAC critic whose bootstrap also subtracts `lambda_critic·b(s′, ã′)`.
pub struct DrndCritic {
    pub sac: SacCritic,
    bonus: SharedBonus,
    pub lambda_critic: f64,
}

impl DrndCritic {
    pub fn new(sac: SacCritic, bonus: SharedBonus, lambda_critic: f64) -> Self {
        Self {
            sac,
            bonus,
            lambda_critic,
        }
    }
}

impl Critic for DrndCritic {
    fn ensemble(&self) -> &CriticEnsemble {
        self.sac.ensemble()
    }

    fn ensemble_mut(&mut self) -> &mut CriticEnsemble {
        self.sac.ensemble_mut()
    }

    fn gamma(&self) -> f64 {
        self.sac.gamma()
    }

    fn get_bellman_target(&self, batch: &Batch, ctx: &TargetContext) -> Result<Tensor> {
        let soft = self.sac.soft_bootstrap(batch, ctx)?;
        let b = self.bonus.bonus(&batch.next_states, &ctx.next_action)?;
        let data = soft
            .data()
            .iter()
            .zip(b.data())
            .map(|(q, b)| q - self.lambda_critic * b)
            .collect();
        bellman_backup(batch, self.gamma(), &Tensor::new(soft.shape().to_vec(), data)?)
    }
}

/// Trains the bonus predictor once per learner step.
pub struct PredictorUpdate(SharedBonus);

impl PredictorUpdate {
    pub fn new(bonus: SharedBonus) -> Self {
        Self(bonus)
    }
}

impl Extension for PredictorUpdate {
    fn on_batch(&mut self, batch: &Batch) -> Result<LossReport> {
        let loss = self.0.borrow_mut().update(&batch.states, &batch.actions)?;
        Ok(LossReport::from([("loss_bonus".to_string(), loss)]))
    }

    fn export(&self, out: &mut ParamMap) {
        self.0.borrow().export(out)
    }

    fn import(&mut self, src: &ParamMap) -> Result<()> {
        self.0.borrow_mut().import(src)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(w: [f64; 2], b: f64) -> Mlp {
        let spec = MlpSpec::new(2, &[], 1, Activation::Relu, Head::Plain);
        Mlp::from_params(
            spec,
            vec![Tensor::matrix(2, 1, w.to_vec()).unwrap(), Tensor::vector(vec![b])],
        )
        .unwrap()
    }

    #[test]
    fn bonus_by_hand() {
        // targets f1 = s + a, f2 = 2s − a + 1; predictor p = 0.5s
        let bonus = DrndBonus::from_parts(
            vec![unit([1.0, 1.0], 0.0), unit([2.0, -1.0], 1.0)],
            unit([0.5, 0.0], 0.0),
            AdamConfig::default(),
            Rng::seed_from(0),
        )
        .unwrap();
        let (s, a) = (0.6, -0.2);
        let (f1, f2, p) = (s + a, 2.0 * s - a + 1.0, 0.5 * s);
        let mu = 0.5 * (f1 + f2);
        let var = 0.5 * ((f1 - mu) * (f1 - mu) + (f2 - mu) * (f2 - mu));
        let b = bonus
            .bonus(&Tensor::column(vec![s]), &Tensor::column(vec![a]))
            .unwrap();
        assert!((b.item() - ((p - mu) * (p - mu) + var)).abs() < 1e-12);
    }

    #[test]
    fn single_target_matched_predictor_is_zero() {
        let f = unit([0.3, -0.7], 0.2);
        let bonus =
            DrndBonus::from_parts(vec![f.clone()], f, AdamConfig::default(), Rng::seed_from(0))
                .unwrap();
        let b = bonus
            .bonus(&Tensor::column(vec![1.0, -2.0]), &Tensor::column(vec![0.5, 0.1]))
            .unwrap();
        assert_eq!(b.data(), &[0.0, 0.0]);
    }

    #[test]
    fn predictor_update_leaves_targets_bit_identical() {
        let mut rng = Rng::seed_from(3);
        let mut bonus =
            DrndBonus::init(3, &[8], 4, 3, AdamConfig::with_lr(1e-3), &mut rng).unwrap();
        let before: Vec<Mlp> = bonus.targets().to_vec();
        let s = Tensor::matrix(4, 2, (0..8).map(|i| i as f64 * 0.1).collect()).unwrap();
        let a = Tensor::column(vec![0.1, -0.2, 0.3, -0.4]);
        for _ in 0..5 {
            bonus.update(&s, &a).unwrap();
        }
        assert_eq!(bonus.targets(), before.as_slice());
    }
}
