//! Epoch loops: the noise-tolerant learner, the plain cross-entropy baseline,
//! feature pre-training and the multi-iteration mentor scheme.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::hyper::{IterationPlan, MlntHyper};
use super::meta::{
    blend_targets, classification_update, ema_update, filter_dataset, meta_loss_and_grad, meta_update, MentorState,
    TeacherState,
};
use crate::data::{Checkpoint, Dataset, MetricsRow, Role};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::noise::{generate_synthetic_labels, rho_from_fraction, topk_neighbors, FeatureIndex};
use crate::rng::{RngStreams, Stream};
use crate::tensor::{forward, Matrix, MlpSpec, MomentumOptState, ParamSet};

#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Matrix,
    pub y: Matrix,
    pub ids: Vec<u64>,
}

impl Batch {
    pub fn from_indices(data: &Dataset, indices: &[usize]) -> Self {
        let labels: Vec<usize> = indices.iter().map(|&i| data.labels()[i]).collect();
        Self {
            x: data.features().select_rows(indices),
            y: Matrix::one_hot(&labels, data.classes()).expect("dataset labels are in range"),
            ids: indices.iter().map(|&i| data.ids()[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Shuffled mini-batches for one epoch. A trailing partial batch is dropped
/// unless the whole set is smaller than one batch.
pub fn epoch_batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    if n < batch_size {
        return vec![order];
    }
    order.chunks_exact(batch_size).map(<[usize]>::to_vec).collect()
}

/// Scalars in force for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub epoch: u32,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl StepSchedule {
    pub fn new(hyper: &MlntHyper, epoch: u32, step: usize, steps_per_epoch: usize) -> Self {
        let progress = epoch as f64 + step as f64 / steps_per_epoch.max(1) as f64;
        Self {
            epoch,
            beta: hyper.beta_at(epoch),
            eta: hyper.eta.at(progress),
            gamma: hyper.gamma.at(epoch),
            lambda: hyper.lambda.at(epoch, hyper.epochs),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub ce_loss: f64,
    pub meta_loss: f64,
    pub correct: usize,
}

pub trait Learner {
    fn step(&mut self, batch: &Batch, sched: &StepSchedule) -> Result<StepStats>;
    fn student(&self) -> &ParamSet;
    fn teacher(&self) -> Option<&ParamSet>;
}

fn count_correct(predictions: &[usize], y: &Matrix) -> usize {
    predictions
        .iter()
        .enumerate()
        .filter(|&(i, &p)| y.get(i, p) == 1.0)
        .count()
}

/// Conventional training: one momentum step on cross entropy per batch.
pub struct CeLearner<'a> {
    spec: &'a MlpSpec,
    params: ParamSet,
    opt: MomentumOptState,
}

impl<'a> CeLearner<'a> {
    pub fn new(spec: &'a MlpSpec, hyper: &MlntHyper, init: ParamSet) -> Result<Self> {
        let opt = MomentumOptState::new(&init, hyper.momentum, hyper.weight_decay, hyper.beta)?;
        Ok(Self {
            spec,
            params: init,
            opt,
        })
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }
}

impl Learner for CeLearner<'_> {
    fn step(&mut self, batch: &Batch, sched: &StepSchedule) -> Result<StepStats> {
        self.opt.lr = sched.beta;
        let cls = classification_update(self.spec, &self.params, &mut self.opt, &batch.x, &batch.y)?;
        self.params = cls.params;
        Ok(StepStats {
            ce_loss: cls.loss,
            meta_loss: 0.0,
            correct: count_correct(&cls.predictions, &batch.y),
        })
    }

    fn student(&self) -> &ParamSet {
        &self.params
    }

    fn teacher(&self) -> Option<&ParamSet> {
        None
    }
}

/// Meta update on synthetic label sets, classification update, EMA teacher.
pub struct MlntLearner<'a> {
    spec: &'a MlpSpec,
    hyper: &'a MlntHyper,
    index: &'a FeatureIndex,
    mentor: Option<&'a MentorState>,
    student: ParamSet,
    teacher: TeacherState,
    opt: MomentumOptState,
    synthetic_rng: ChaCha8Rng,
}

impl<'a> MlntLearner<'a> {
    pub fn new(
        spec: &'a MlpSpec,
        hyper: &'a MlntHyper,
        index: &'a FeatureIndex,
        mentor: Option<&'a MentorState>,
        init: ParamSet,
        synthetic_rng: ChaCha8Rng,
    ) -> Result<Self> {
        let opt = MomentumOptState::new(&init, hyper.momentum, hyper.weight_decay, hyper.beta)?;
        Ok(Self {
            spec,
            hyper,
            index,
            mentor,
            teacher: TeacherState::new(&init),
            student: init,
            opt,
            synthetic_rng,
        })
    }

    fn consistency_target(&self, x: &Matrix, lambda: f64) -> Result<crate::tensor::SoftmaxOutput> {
        let (_, teacher) = forward(self.spec, &self.teacher.params, x)?;
        match self.mentor {
            None => Ok(teacher),
            Some(m) => {
                let (_, mentor) = forward(self.spec, &m.params, x)?;
                blend_targets(&teacher, &mentor, lambda)
            }
        }
    }
}

impl Learner for MlntLearner<'_> {
    fn step(&mut self, batch: &Batch, sched: &StepSchedule) -> Result<StepStats> {
        let h = self.hyper;
        let mut meta_loss = 0.0;
        if h.m > 0 {
            let neighbors = topk_neighbors(self.index, &batch.ids, h.neighbors)?;
            let rho = rho_from_fraction(h.rho_fraction, batch.len());
            let variants = generate_synthetic_labels(&batch.y, &neighbors, rho, h.m, &mut self.synthetic_rng)?;
            let target = self.consistency_target(&batch.x, sched.lambda)?;
            let (loss, grad) = meta_loss_and_grad(
                self.spec,
                &self.student,
                &batch.x,
                &variants,
                &target,
                h.alpha,
                h.meta_mode,
                h.fd_eps,
            )?;
            self.student = meta_update(&self.student, &grad, sched.eta)?;
            meta_loss = loss;
        }

        self.opt.lr = sched.beta;
        let cls = classification_update(self.spec, &self.student, &mut self.opt, &batch.x, &batch.y)?;
        self.student = cls.params;
        ema_update(&mut self.teacher, &self.student, sched.gamma)?;
        if !self.student.all_finite() {
            return Err(Error::Numeric("student parameters diverged".into()));
        }
        Ok(StepStats {
            ce_loss: cls.loss,
            meta_loss,
            correct: count_correct(&cls.predictions, &batch.y),
        })
    }

    fn student(&self) -> &ParamSet {
        &self.student
    }

    fn teacher(&self) -> Option<&ParamSet> {
        Some(&self.teacher.params)
    }
}

#[derive(Debug, Clone)]
pub struct IterationResult {
    /// Highest validation accuracy over both roles and all epochs.
    pub best: Checkpoint,
    pub student: Checkpoint,
    /// Absent for the cross-entropy baseline.
    pub teacher: Option<Checkpoint>,
    pub metrics: Vec<MetricsRow>,
}

struct FitArgs<'a> {
    spec: &'a MlpSpec,
    hyper: &'a MlntHyper,
    data: &'a Dataset,
    val: &'a Dataset,
    iteration: u32,
    filtered_count: usize,
}

fn checkpoint(spec: &MlpSpec, params: &ParamSet, epoch: u32, role: Role, val_accuracy: f64) -> Checkpoint {
    Checkpoint {
        spec: spec.clone(),
        params: params.clone(),
        epoch,
        role,
        val_accuracy,
    }
}

fn fit<L: Learner>(learner: &mut L, args: FitArgs<'_>, shuffle_rng: &mut ChaCha8Rng) -> Result<IterationResult> {
    let FitArgs {
        spec,
        hyper,
        data,
        val,
        iteration,
        filtered_count,
    } = args;
    let mut metrics = Vec::with_capacity(hyper.epochs as usize);
    let mut best: Option<Checkpoint> = None;
    let mut consider = |ck: Checkpoint| {
        // later epochs, and the teacher within an epoch, win ties
        if best.as_ref().is_none_or(|b| ck.val_accuracy >= b.val_accuracy) {
            best = Some(ck);
        }
    };

    for epoch in 0..hyper.epochs {
        let batches = epoch_batches(data.len(), hyper.batch_size, shuffle_rng);
        let steps = batches.len();
        let (mut ce, mut meta, mut correct, mut seen) = (0.0, 0.0, 0usize, 0usize);
        let mut sched = StepSchedule::new(hyper, epoch, 0, steps);
        for (s, idx) in batches.iter().enumerate() {
            sched = StepSchedule::new(hyper, epoch, s, steps);
            let batch = Batch::from_indices(data, idx);
            let stats = learner.step(&batch, &sched)?;
            ce += stats.ce_loss;
            meta += stats.meta_loss;
            correct += stats.correct;
            seen += batch.len();
        }

        let val_student = accuracy(spec, learner.student(), val)?;
        consider(checkpoint(spec, learner.student(), epoch, Role::Student, val_student));
        let val_teacher = match learner.teacher() {
            Some(t) => {
                let acc = accuracy(spec, t, val)?;
                consider(checkpoint(spec, t, epoch, Role::Teacher, acc));
                acc
            }
            None => f64::NAN,
        };
        let has_teacher = learner.teacher().is_some();
        metrics.push(MetricsRow {
            iteration,
            epoch,
            step_lr: sched.beta,
            eta: if has_teacher { sched.eta } else { 0.0 },
            gamma: if has_teacher { sched.gamma } else { f64::NAN },
            lambda: if has_teacher && iteration > 1 {
                sched.lambda
            } else {
                0.0
            },
            train_acc_noisy: correct as f64 / seen.max(1) as f64,
            val_acc_student: val_student,
            val_acc_teacher: val_teacher,
            ce_loss: ce / steps.max(1) as f64,
            meta_loss: meta / steps.max(1) as f64,
            filtered_count,
        });
    }

    let last_epoch = hyper.epochs - 1;
    let last = metrics.last().expect("at least one epoch");
    let student = checkpoint(spec, learner.student(), last_epoch, Role::Student, last.val_acc_student);
    let teacher = learner
        .teacher()
        .map(|t| checkpoint(spec, t, last_epoch, Role::Teacher, last.val_acc_teacher));
    Ok(IterationResult {
        best: best.expect("at least one epoch"),
        student,
        teacher,
        metrics,
    })
}

/// Everything one training iteration reads.
#[derive(Clone, Copy)]
pub struct IterationSetup<'a> {
    pub spec: &'a MlpSpec,
    pub hyper: &'a MlntHyper,
    /// Samples the mini-batches are drawn from (the filtered set after the
    /// first iteration).
    pub cls_data: &'a Dataset,
    pub val: &'a Dataset,
    pub index: &'a FeatureIndex,
    /// `None` in the first iteration: consistency targets come from the teacher alone.
    pub mentor: Option<&'a MentorState>,
    pub streams: RngStreams,
    /// 1-based.
    pub iteration: u32,
}

fn check_setup(setup: &IterationSetup<'_>) -> Result<()> {
    setup.hyper.validate()?;
    if setup.cls_data.is_empty() {
        return Err(Error::Config(format!(
            "iteration {} has no training samples (filtered set is empty)",
            setup.iteration
        )));
    }
    if setup.cls_data.dim() != setup.spec.input_dim() || setup.cls_data.classes() != setup.spec.num_classes() {
        return Err(Error::Dimension("dataset does not match the network layout".into()));
    }
    if !setup.index.covers(setup.cls_data.ids()) {
        return Err(Error::Config("feature index does not cover the training set".into()));
    }
    Ok(())
}

pub fn train_iteration(setup: IterationSetup<'_>) -> Result<IterationResult> {
    check_setup(&setup)?;
    let it = setup.iteration;
    let init = ParamSet::init(setup.spec, &mut setup.streams.stream(Stream::WeightInit, it));
    let mut learner = MlntLearner::new(
        setup.spec,
        setup.hyper,
        setup.index,
        setup.mentor,
        init,
        setup.streams.stream(Stream::SyntheticLabels, it),
    )?;
    let args = FitArgs {
        spec: setup.spec,
        hyper: setup.hyper,
        data: setup.cls_data,
        val: setup.val,
        iteration: it,
        filtered_count: setup.cls_data.len(),
    };
    fit(&mut learner, args, &mut setup.streams.stream(Stream::BatchShuffle, it))
}

/// Cross-entropy training with the same initialisation and batch order as
/// the first noise-tolerant iteration. Metrics rows carry iteration 0.
pub fn train_baseline(
    spec: &MlpSpec,
    hyper: &MlntHyper,
    data: &Dataset,
    val: &Dataset,
    streams: RngStreams,
) -> Result<IterationResult> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::Config("baseline training set is empty".into()));
    }
    let init = ParamSet::init(spec, &mut streams.stream(Stream::WeightInit, 1));
    let mut learner = CeLearner::new(spec, hyper, init)?;
    let args = FitArgs {
        spec,
        hyper,
        data,
        val,
        iteration: 0,
        filtered_count: data.len(),
    };
    fit(&mut learner, args, &mut streams.stream(Stream::BatchShuffle, 1))
}

/// Plain cross-entropy training on the whole noisy set, used to produce the
/// network whose logits feed the neighbour search.
pub fn pretrain_features(
    spec: &MlpSpec,
    hyper: &MlntHyper,
    data: &Dataset,
    epochs: u32,
    streams: RngStreams,
) -> Result<ParamSet> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::Config("pre-training set is empty".into()));
    }
    let init = ParamSet::init(spec, &mut streams.stream(Stream::Pretrain, 0));
    let mut shuffle = streams.stream(Stream::Pretrain, 1);
    let mut learner = CeLearner::new(spec, hyper, init)?;
    let schedule_hyper = MlntHyper {
        epochs,
        lr_decay_epoch: hyper.lr_decay_epoch.min(epochs),
        ..hyper.clone()
    };
    for epoch in 0..epochs {
        let batches = epoch_batches(data.len(), hyper.batch_size, &mut shuffle);
        for (s, idx) in batches.iter().enumerate() {
            let sched = StepSchedule::new(&schedule_hyper, epoch, s, batches.len());
            learner.step(&Batch::from_indices(data, idx), &sched)?;
        }
    }
    Ok(learner.into_params())
}

#[derive(Debug, Clone)]
pub struct IterativeOutcome {
    pub iterations: Vec<IterationResult>,
}

impl IterativeOutcome {
    /// Best checkpoint of the final iteration.
    pub fn final_checkpoint(&self) -> &Checkpoint {
        &self.iterations.last().expect("at least one iteration").best
    }
}

/// Iteration 1 trains on the full noisy set with teacher targets. Each later
/// iteration takes the previous best checkpoint as mentor, keeps only the
/// samples the mentor finds plausible, blends mentor and teacher targets, and
/// restarts from a fresh initialisation.
pub fn run_iterative_training(
    plan: &IterationPlan,
    base: &MlntHyper,
    spec: &MlpSpec,
    train: &Dataset,
    val: &Dataset,
    index: &FeatureIndex,
    streams: RngStreams,
) -> Result<IterativeOutcome> {
    plan.validate()?;
    let mut iterations: Vec<IterationResult> = Vec::with_capacity(plan.num_iterations as usize);
    for it in 1..=plan.num_iterations {
        let hyper = plan.hyper_for(base, it);
        let mentor = iterations.last().map(|prev| MentorState {
            params: prev.best.params.clone(),
            source: format!("iteration {} {:?} at epoch {}", it - 1, prev.best.role, prev.best.epoch),
        });
        let filtered;
        let cls_data = match &mentor {
            None => train,
            Some(m) => {
                filtered = filter_dataset(train, spec, m, hyper.tau)?;
                &filtered
            }
        };
        let result = train_iteration(IterationSetup {
            spec,
            hyper: &hyper,
            cls_data,
            val,
            index,
            mentor: mentor.as_ref(),
            streams,
            iteration: it,
        })?;
        iterations.push(result);
    }
    Ok(IterativeOutcome { iterations })
}
