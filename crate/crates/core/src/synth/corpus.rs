use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{degrade, derive_seed, generate_scene, DegradationKind, DegradationSpec, SceneSpec, SynthError};
use crate::evaluation::true_dice;
use crate::manifest::{Manifest, ManifestSample, SampleMeta};
use crate::raster::{save_image, save_probability, save_segmentation};

/// Error modes used when no degradation list is given. Each magnitude is the
/// upper end of the range sampled per corpus sample.
pub fn default_degradations() -> Vec<DegradationSpec> {
    vec![
        DegradationSpec::new(DegradationKind::Erode, 6, 101),
        DegradationSpec::new(DegradationKind::Dilate, 6, 202),
        DegradationSpec::new(DegradationKind::Translate, 24, 303),
        DegradationSpec::new(DegradationKind::BoundaryJitter, 6, 404),
        DegradationSpec::new(DegradationKind::DropObject, 1, 505),
        DegradationSpec::new(DegradationKind::SpuriousBlob, 3, 606),
    ]
}

/// One generated sample before it is written to disk.
#[derive(Clone, Debug)]
pub struct CorpusSample {
    pub sample_id: String,
    pub scene_seed: u64,
    pub degradation: DegradationSpec,
}

/// Sample `index`'s scene seed and concrete degradation. Degradations cycle
/// through `templates`; the magnitude is drawn uniformly from
/// `0..=template.magnitude`.
pub fn plan_sample(index: usize, scene: &SceneSpec, templates: &[DegradationSpec]) -> CorpusSample {
    let template = templates[index % templates.len()];
    let seed = derive_seed(template.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let magnitude = rng.random_range(0..=template.magnitude);
    CorpusSample {
        sample_id: format!("s{index:04}"),
        scene_seed: derive_seed(scene.seed, index as u64),
        degradation: DegradationSpec::new(template.kind, magnitude, seed),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `n` samples under `out/samples/` and the manifest to
/// `out/manifest.json`. The output is a pure function of the inputs.
pub fn build_corpus(
    n: usize,
    scene: &SceneSpec,
    degradations: &[DegradationSpec],
    out: &Path,
) -> Result<Manifest, SynthError> {
    scene.validate()?;
    let templates = if degradations.is_empty() {
        default_degradations()
    } else {
        degradations.to_vec()
    };
    for t in &templates {
        t.validate()?;
    }
    fs::create_dir_all(out).map_err(io_err(out))?;

    let classes = scene.num_classes;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let plan = plan_sample(i, scene, &templates);
        let spec = SceneSpec {
            seed: plan.scene_seed,
            ..scene.clone()
        };
        let generated = generate_scene(&spec)?;
        let degraded = degrade(&generated.truth, &plan.degradation)?;
        let dice = true_dice(&degraded.prediction, &generated.truth).expect("same shape");

        let rel_dir = format!("samples/{}", plan.sample_id);
        let dir = out.join(&rel_dir);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let image = format!("{rel_dir}/image.png");
        let prediction: Vec<String> = (1..=classes).map(|c| format!("{rel_dir}/prediction_{c}.png")).collect();
        let truth: Vec<String> = (1..=classes).map(|c| format!("{rel_dir}/truth_{c}.png")).collect();
        let probability: Vec<String> = (0..=classes).map(|c| format!("{rel_dir}/probability_{c}.png")).collect();

        let abs = |v: &[String]| v.iter().map(|p| out.join(p)).collect::<Vec<_>>();
        save_image(&generated.image, out.join(&image))?;
        save_segmentation(&degraded.prediction, &abs(&prediction))?;
        save_segmentation(&generated.truth, &abs(&truth))?;
        save_probability(&degraded.probability, &abs(&probability))?;

        samples.push(ManifestSample {
            sample_id: plan.sample_id,
            image,
            prediction: Some(prediction),
            labelmap: None,
            probability: Some(probability),
            truth: Some(truth),
            meta: Some(SampleMeta {
                true_dice: Some(dice),
                scene_seed: Some(plan.scene_seed),
                degradation: Some(plan.degradation),
            }),
        });
    }

    let mut manifest = Manifest::new(samples);
    let path = out.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(io_err(&path))?;
    manifest.base_dir = out.to_path_buf();
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_corpus(0, &SceneSpec::default(), &[], dir.path()).unwrap();
        assert!(m.samples.is_empty());
        let back = Manifest::load(dir.path().join("manifest.json")).unwrap();
        assert!(back.samples.is_empty());
    }

    #[test]
    fn recorded_dice_matches_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_corpus(6, &SceneSpec::default(), &[], dir.path()).unwrap();
        let back = Manifest::load(dir.path().join("manifest.json")).unwrap();
        assert_eq!(back.samples.len(), 6);
        for s in &back.samples {
            let pred = back.load_prediction(s).unwrap();
            let truth = back.load_truth(s).unwrap().unwrap();
            let recorded = s.meta.as_ref().unwrap().true_dice.unwrap();
            assert_eq!(true_dice(&pred, &truth).unwrap(), recorded);
            assert!(back.load_probability(s).unwrap().is_some());
        }
        assert_eq!(m.samples, back.samples);
    }
}
