//! Joint visual/semantic retrieval over the memory.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::memory::MemoryInstance;

pub const ZERO_NORM: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_normalized(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            what: "cosine operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na2, nb2) = (dot(a, a), dot(b, b));
    if na2 < ZERO_NORM * ZERO_NORM || nb2 < ZERO_NORM * ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    // one square root, so identical vectors give exactly 1
    Ok((dot(a, b) / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

/// What the scene contributes to retrieval.
#[derive(Debug, Clone)]
pub struct SceneQuery {
    pub scene_descriptor: Vec<f64>,
    task_embedding: Vec<f64>,
    pub scene_task: String,
}

impl SceneQuery {
    /// Normalizes `task_embedding` to unit length.
    pub fn new(scene_descriptor: Vec<f64>, task_embedding: &[f64], scene_task: impl Into<String>) -> Result<Self> {
        Ok(Self {
            scene_descriptor,
            task_embedding: l2_normalized(task_embedding)?,
            scene_task: scene_task.into(),
        })
    }

    pub fn task_embedding(&self) -> &[f64] {
        &self.task_embedding
    }
}

/// Object-descriptor cosine times task-embedding cosine.
pub fn joint_score(query: &SceneQuery, instance: &MemoryInstance) -> Result<f64> {
    let object = cosine_similarity(&query.scene_descriptor, &instance.global_descriptor)?;
    let task = cosine_similarity(&query.task_embedding, &instance.task_embedding)?;
    Ok(object * task)
}

/// Held-out filters: instances matching any listed object or task are dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Exclusion {
    pub objects: Vec<String>,
    pub tasks: Vec<String>,
}

impl Exclusion {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn excludes(&self, instance: &MemoryInstance) -> bool {
        self.objects.contains(&instance.object_name) || self.tasks.contains(&instance.task)
    }
}

#[derive(Debug, Clone)]
pub struct Retrieved<'a> {
    pub instance: &'a MemoryInstance,
    pub score: f64,
}

/// Highest joint score among instances for which `exclude` is false.
/// Ties go to the lowest instance id.
pub fn retrieve<'a, F>(query: &SceneQuery, store: &'a [MemoryInstance], exclude: F) -> Result<Retrieved<'a>>
where
    F: Fn(&MemoryInstance) -> bool,
{
    let mut best: Option<Retrieved<'a>> = None;
    for instance in store.iter().filter(|m| !exclude(m)) {
        let score = joint_score(query, instance)?;
        let better = match &best {
            None => true,
            Some(b) => score > b.score || (score == b.score && instance.id < b.instance.id),
        };
        if better {
            best = Some(Retrieved { instance, score });
        }
    }
    best.ok_or(Error::EmptyMemory)
}

/// All surviving instances ranked by score (diagnostics only).
pub fn rank<'a, F>(query: &SceneQuery, store: &'a [MemoryInstance], exclude: F, k: usize) -> Result<Vec<Retrieved<'a>>>
where
    F: Fn(&MemoryInstance) -> bool,
{
    let mut all = store
        .iter()
        .filter(|m| !exclude(m))
        .map(|instance| {
            Ok(Retrieved {
                instance,
                score: joint_score(query, instance)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.instance.id.cmp(&b.instance.id)));
    all.truncate(k);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GraspPose, Mat3, Vec3};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(id: u64, object: &str, task: &str, desc: Vec<f64>, emb: Vec<f64>) -> MemoryInstance {
        let g = GraspPose::new(Mat3::identity(), Vec3::zeros(), 0.05, 0.05).unwrap();
        let mut m = MemoryInstance::draft(object, task, l2_normalized(&emb).unwrap(), "unused", g);
        m.id = id;
        m.global_descriptor = desc;
        m
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(768);
        let a: Vec<f64> = (0..768).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..768).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in 0..768 {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        let expected = ab / (aa.sqrt() * bb.sqrt());
        assert_relative_eq!(cosine_similarity(&a, &b).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn joint_score_is_a_product() {
        // object vectors at cos 0.8, task vectors at cos 0.5
        let q = SceneQuery::new(vec![1.0, 0.0], &[1.0, 0.0], "t").unwrap();
        let m = instance(0, "o", "t", vec![0.8, 0.6], vec![0.5, 0.75f64.sqrt()]);
        assert_relative_eq!(joint_score(&q, &m).unwrap(), 0.4, epsilon = 1e-15);

        let perfect = instance(1, "o", "t", vec![2.0, 0.0], vec![1.0, 0.0]);
        assert_eq!(joint_score(&q, &perfect).unwrap(), 1.0);

        let orthogonal_task = instance(2, "o", "t", vec![1.0, 0.0], vec![0.0, 1.0]);
        assert_eq!(joint_score(&q, &orthogonal_task).unwrap(), 0.0);
    }

    #[test]
    fn retrieve_examples() {
        let q = SceneQuery::new(vec![1.0, 0.0, 0.0], &[1.0, 0.0], "cut").unwrap();
        let single = vec![instance(3, "knife", "cut", vec![0.0, 1.0, 0.0], vec![0.0, 1.0])];
        assert_eq!(retrieve(&q, &single, |_| false).unwrap().instance.id, 3);

        let mut store: Vec<MemoryInstance> = (0..10)
            .map(|i| {
                let a = 0.2 + 0.05 * i as f64;
                instance(i, &format!("o{i}"), "t", vec![a, 1.0, 0.0], vec![a, 1.0])
            })
            .collect();
        store[7] = instance(7, "knife", "cut", vec![5.0, 1.0, 0.0], vec![5.0, 1.0]);
        // exhaustive scan oracle
        let oracle = store
            .iter()
            .max_by(|a, b| joint_score(&q, a).unwrap().total_cmp(&joint_score(&q, b).unwrap()))
            .unwrap()
            .id;
        assert_eq!(oracle, 7);
        assert_eq!(retrieve(&q, &store, |_| false).unwrap().instance.id, 7);

        let held_out = Exclusion {
            objects: vec!["knife".into()],
            tasks: vec![],
        };
        let second = retrieve(&q, &store, |m| held_out.excludes(m)).unwrap();
        assert_eq!(second.instance.id, 9);

        let all = Exclusion {
            objects: vec![],
            tasks: vec!["t".into(), "cut".into()],
        };
        assert!(matches!(
            retrieve(&q, &store, |m| all.excludes(m)),
            Err(Error::EmptyMemory)
        ));
    }

    #[test]
    fn negative_scores_and_ties() {
        let q = SceneQuery::new(vec![1.0, 0.0], &[1.0, 0.0], "t").unwrap();
        let store = vec![
            instance(5, "a", "t", vec![-1.0, 0.0], vec![1.0, 0.0]),
            instance(2, "b", "t", vec![1.0, 0.0], vec![1.0, 0.0]),
            instance(1, "c", "t", vec![1.0, 0.0], vec![1.0, 0.0]),
        ];
        let r = retrieve(&q, &store, |_| false).unwrap();
        assert_eq!(r.instance.id, 1);
        let only_negative = retrieve(&q, &store, |m| m.id != 5).unwrap();
        assert_eq!(only_negative.score, -1.0);
        let ranked = rank(&q, &store, |_| false, 3).unwrap();
        assert_eq!(ranked.iter().map(|r| r.instance.id).collect::<Vec<_>>(), vec![1, 2, 5]);
    }

    proptest! {
        #[test]
        fn scale_and_permutation_invariance(
            descs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..20),
            embs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 20),
            scene in prop::collection::vec(-1.0f64..1.0, 4),
            factor in 0.01f64..100.0,
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            prop_assume!(scene.iter().any(|v| v.abs() > 1e-3));
            prop_assume!(descs.iter().all(|d| d.iter().any(|v| v.abs() > 1e-3)));
            prop_assume!(embs.iter().all(|d| d.iter().any(|v| v.abs() > 1e-3)));
            let store: Vec<MemoryInstance> = descs.iter().enumerate()
                .map(|(i, d)| instance(i as u64, "o", "t", d.clone(), embs[i].clone()))
                .collect();
            let q = SceneQuery::new(scene.clone(), &[1.0, 0.5, -0.25], "t").unwrap();
            let base = retrieve(&q, &store, |_| false).unwrap();
            let scaled = SceneQuery::new(scene.iter().map(|v| v * factor).collect(), &[1.0, 0.5, -0.25], "t").unwrap();
            let s = retrieve(&scaled, &store, |_| false).unwrap();
            // scaling may perturb the last ulp; only exact near-ties may flip
            if s.instance.id != base.instance.id {
                prop_assert!((s.score - base.score).abs() < 1e-12);
            }
            let mut shuffled = store.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(retrieve(&q, &shuffled, |_| false).unwrap().instance.id, base.instance.id);

            for m in &store {
                let cos_o = cosine_similarity(&q.scene_descriptor, &m.global_descriptor).unwrap();
                let cos_t = cosine_similarity(q.task_embedding(), &m.task_embedding).unwrap();
                prop_assert_eq!(joint_score(&q, m).unwrap(), cos_o * cos_t);
            }
        }
    }
}
