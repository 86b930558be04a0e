//! A planning problem: models, reward, and the actions available at each time step.

use std::sync::Arc;

use crate::belief::WeightedParticleBelief;
use crate::entropy::BoundsInput;
use crate::models::{transition_density_max, Action, ModelError, ObservationModel, TransitionModel};
use crate::reward::RewardSpec;
use crate::scalar::Scalar;

/// Candidate actions, possibly time-varying (the target part of a joint action follows a cycle).
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSet<T> {
    Fixed(Vec<Action<T>>),
    /// Agent actions extended with the target displacement `cycle[step % cycle.len()]`.
    TargetCycle { agent: Vec<Action<T>>, cycle: Vec<Vec<T>> },
}

impl<T: Scalar> ActionSet<T> {
    pub fn len(&self) -> usize {
        match self {
            ActionSet::Fixed(a) => a.len(),
            ActionSet::TargetCycle { agent, .. } => agent.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Actions available at absolute time `step`.
    pub fn at(&self, step: usize) -> Vec<Action<T>> {
        match self {
            ActionSet::Fixed(a) => a.clone(),
            ActionSet::TargetCycle { agent, cycle } => {
                let target = &cycle[step % cycle.len()];
                agent
                    .iter()
                    .map(|a| {
                        let mut d = a.displacement.clone();
                        d.extend_from_slice(target);
                        Action { displacement: d, ..a.clone() }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone)]
pub struct Problem<T: Scalar> {
    pub transition: Arc<dyn TransitionModel<T>>,
    pub observation: Arc<dyn ObservationModel<T>>,
    pub reward: RewardSpec,
    pub actions: ActionSet<T>,
    /// Supremum of the transition density.
    pub m: T,
}

impl<T: Scalar> Problem<T> {
    pub fn new(
        transition: Arc<dyn TransitionModel<T>>,
        observation: Arc<dyn ObservationModel<T>>,
        reward: RewardSpec,
        actions: ActionSet<T>,
    ) -> Result<Self, ModelError> {
        if actions.is_empty() {
            return Err(ModelError::InvalidParameter("empty action set".into()));
        }
        let m = transition_density_max(transition.as_ref())?;
        Ok(Self { transition, observation, reward, actions, m })
    }

    pub fn gamma(&self) -> T {
        self.reward.gamma()
    }

    pub fn input<'a>(
        &'a self,
        prev: &'a WeightedParticleBelief<T>,
        action: &'a Action<T>,
        observation: &'a [T],
        post: &'a WeightedParticleBelief<T>,
    ) -> BoundsInput<'a, T> {
        BoundsInput {
            prev,
            action,
            observation,
            post,
            transition: self.transition.as_ref(),
            obs: self.observation.as_ref(),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Problem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("reward", &self.reward)
            .field("actions", &self.actions.len())
            .field("m", &self.m)
            .finish()
    }
}
