use std::path::Path;

use tsvd_core::classifier::{
    evaluate, fmt_real, train_sweep, write_confusion_csv, write_per_class_csv, write_rates_csv,
    ClassificationReport,
};
use tsvd_core::identification::{
    block_contrast, feature_vectors, order_by_label, roc_curve, write_heatmap_pgm, write_roc_csv,
    FeatureVector,
};
use tsvd_core::mnist::{build_class_partition, ClassPartition, ImageSet, Normalization};

use crate::config::RunConfig;
use crate::exit::CliError;
use crate::store::{self, Manifest};

fn create_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("{}: {e}", out.display())))
}

fn load_images(images: &Path, labels: &Path) -> Result<ImageSet, CliError> {
    Ok(ImageSet::load(images, labels)?)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let ks = cfg.require_ks()?;
    let (images, labels) = cfg.train_paths()?;
    let set = load_images(images, labels)?;
    let normalization = cfg.normalization();
    let partition = build_class_partition(&set, normalization);
    drop(set);
    let sweep = train_sweep(&partition, ks, cfg.par)?;
    create_out(&cfg.out)?;
    let raw_values = partition.total() * set_size(&partition);
    for bases in &sweep.sets {
        let bytes = store::save(&cfg.out, bases, &sweep.spectra, normalization)?;
        let (ell, n) = bases.slice_shape();
        println!(
            "k={}: {} bases of {ell}x{}x{n}, {} stored values ({bytes} bytes) for {raw_values} training values",
            bases.k(),
            bases.len(),
            bases.k(),
            bases.storage(),
        );
    }
    Ok(())
}

fn set_size(p: &ClassPartition) -> usize {
    p.slice_shape().map_or(0, |(ell, n)| ell * n)
}

/// Test partition for the normalization the bases were trained with.
fn test_partition(
    cfg: &RunConfig,
    cache: &mut Vec<(Normalization, ClassPartition)>,
    wanted: Normalization,
) -> Result<usize, CliError> {
    if let Some(explicit) = cfg.normalize {
        if explicit != wanted {
            return Err(CliError::manifest(format!(
                "bases were trained with normalization `{}`, --normalize asks for `{}`",
                wanted.name(),
                explicit.name()
            )));
        }
    }
    if let Some(pos) = cache.iter().position(|(n, _)| *n == wanted) {
        return Ok(pos);
    }
    let (images, labels) = cfg.test_paths()?;
    let set = load_images(images, labels)?;
    cache.push((wanted, build_class_partition(&set, wanted)));
    Ok(cache.len() - 1)
}

fn check_shape(manifest: &Manifest, test: &ClassPartition) -> Result<(), CliError> {
    match test.slice_shape() {
        Some(shape) if shape != (manifest.ell, manifest.n) => Err(CliError::manifest(format!(
            "test images are {}x{}, bases expect {}x{}",
            shape.0, shape.1, manifest.ell, manifest.n
        ))),
        Some(_) if test.num_classes() != manifest.classes.len() => Err(CliError::manifest(format!(
            "test data has {} classes, manifest lists {}",
            test.num_classes(),
            manifest.classes.len()
        ))),
        _ => Ok(()),
    }
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let ks = cfg.require_ks()?;
    cfg.test_paths()?;
    create_out(&cfg.out)?;
    let mut cache = Vec::new();
    let mut reports: Vec<(usize, ClassificationReport)> = Vec::new();
    for &k in ks {
        let loaded = store::load(&cfg.out, k)?;
        let idx = test_partition(cfg, &mut cache, loaded.normalization()?)?;
        let test = &cache[idx].1;
        check_shape(&loaded.manifest, test)?;
        let report = evaluate(&loaded.bases, test, cfg.par)?;
        let dir = store::k_dir(&cfg.out, k);
        write_per_class_csv(&dir.join("per_digit.csv"), &report)?;
        write_confusion_csv(&dir.join("confusion.csv"), &report)?;
        println!("k={k} r={:.2}", 100.0 * report.overall_rate());
        reports.push((k, report));
    }
    let rows: Vec<(usize, &ClassificationReport)> = reports.iter().map(|(k, r)| (*k, r)).collect();
    write_rates_csv(&cfg.out.join("rates.csv"), &rows)?;
    Ok(())
}

fn write_tube_spectrum(path: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let mut text = String::from("class,index,norm\n");
    for c in &manifest.classes {
        for (i, norm) in c.tube_norms.iter().enumerate() {
            text.push_str(&format!("{},{i},{}\n", c.label, fmt_real(*norm)));
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn identify(cfg: &RunConfig) -> Result<(), CliError> {
    let ks = cfg.require_ks()?;
    cfg.test_paths()?;
    create_out(&cfg.out)?;
    let mut cache = Vec::new();
    for (pos, &k) in ks.iter().enumerate() {
        let loaded = store::load(&cfg.out, k)?;
        let idx = test_partition(cfg, &mut cache, loaded.normalization()?)?;
        let test = &cache[idx].1;
        check_shape(&loaded.manifest, test)?;
        let features = feature_vectors(&loaded.bases, test, cfg.par)?;
        let roc = roc_curve(&features, cfg.bins, cfg.par)?;
        write_roc_csv(&cfg.out.join(format!("roc_k{k}.csv")), &roc)?;
        println!(
            "k={k} auc={:.4} pairs={} positives={}",
            roc.auc(),
            roc.positives + roc.negatives,
            roc.positives
        );
        if pos == 0 {
            heatmap(cfg, &features)?;
            write_tube_spectrum(&cfg.out.join("tube_spectrum.csv"), &loaded.manifest)?;
        }
    }
    Ok(())
}

fn heatmap(cfg: &RunConfig, features: &[FeatureVector]) -> Result<(), CliError> {
    let ordered: Vec<FeatureVector> = order_by_label(features)
        .into_iter()
        .map(|i| features[i].clone())
        .collect();
    let full = 0..ordered.len();
    let rows = cfg.rows.clone().unwrap_or(full.clone());
    let cols = cfg.cols.clone().unwrap_or(full);
    write_heatmap_pgm(&cfg.out.join("heatmap.pgm"), &ordered, rows.clone(), cols.clone())?;
    let contrast = block_contrast(&ordered, cfg.par)?;
    println!(
        "heatmap {}x{}: same-digit mean {:.4}, cross-digit mean {:.4}",
        rows.len(),
        cols.len(),
        contrast.within_mean,
        contrast.cross_mean
    );
    Ok(())
}
