use recmia_core::attack::{AttackDataset, FeatureMethod, Provenance, WeightScheme};
use recmia_core::cache::Cache;
use recmia_core::experiment::{
    grid_specs, run_experiment, run_grid, Assumption, Catalog, DatasetId, DatasetSource, DefenseSpec, ExperimentSpec,
    Lab, SideSpec,
};
use recmia_core::recommender::Algorithm;
use recmia_core::synthetic::SyntheticConfig;

fn small_catalog() -> Catalog {
    let cfg = SyntheticConfig {
        n_users: 400,
        n_items: 150,
        max_interactions: 30,
        ..SyntheticConfig::default()
    };
    Catalog::default().with(DatasetId::Synthetic, DatasetSource::Synthetic(cfg))
}

fn base() -> ExperimentSpec {
    let mut spec = ExperimentSpec::from_notation("SISI").unwrap();
    spec.k = 30;
    spec.l = 16;
    spec.pipeline.mf.epochs = 20;
    spec.pipeline.ncf.epochs = 3;
    spec
}

fn sides() -> Vec<SideSpec> {
    [Algorithm::Item, Algorithm::Lfm, Algorithm::Ncf]
        .map(|algorithm| SideSpec {
            dataset: DatasetId::Synthetic,
            algorithm,
        })
        .to_vec()
}

#[test]
fn grid_diagonal_matches_independent_runs() {
    let lab = Lab::new(small_catalog(), Cache::disabled());
    let mut base = base();
    base.notation = None;
    let specs = grid_specs(&base, &sides());
    let grid = run_grid(&lab, &specs).unwrap();
    assert_eq!(grid.cells.len(), 3);
    assert!(grid.failures.is_empty(), "{:?}", grid.failures);

    for side in sides() {
        let mut spec = base.clone();
        spec.shadow = side;
        spec.target = side;
        assert_eq!(spec.assumption(), Assumption::I);
        let alone = run_experiment(&spec, &small_catalog(), &Cache::disabled()).unwrap();
        let code = side.code();
        assert_eq!(grid.get(&code, &code).unwrap().to_bits(), alone.auc.to_bits(), "{code}");
    }
    // Assumption-I cells are informative even at this size
    assert!(grid.get("SI", "SI").unwrap() > 0.6);
}

#[test]
fn disk_cache_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let spec = {
        let mut s = base();
        s.notation = Some("SLSL".into());
        s.shadow.algorithm = Algorithm::Lfm;
        s.target.algorithm = Algorithm::Lfm;
        s
    };
    let plain = run_experiment(&spec, &small_catalog(), &Cache::disabled()).unwrap();
    let cold = run_experiment(&spec, &small_catalog(), &Cache::at(dir.path())).unwrap();
    let warm = run_experiment(&spec, &small_catalog(), &Cache::at(dir.path())).unwrap();
    let json = plain.to_json_without_timing().unwrap();
    assert_eq!(json, cold.to_json_without_timing().unwrap());
    assert_eq!(json, warm.to_json_without_timing().unwrap());
    assert!(dir.path().join("embedding").read_dir().unwrap().count() >= 1);
    assert!(dir.path().join("recommender").read_dir().unwrap().count() >= 2);
}

#[test]
fn exported_features_match_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::new(small_catalog(), Cache::disabled()).with_export_dir(dir.path());
    let report = lab.run(&base()).unwrap();
    assert_eq!(report.exports.len(), 2);
    let target = AttackDataset::read_csv(
        std::io::BufReader::new(std::fs::File::open(&report.exports[1]).unwrap()),
        Provenance::TargetTest,
        FeatureMethod::Origin,
        WeightScheme::Positional,
    )
    .unwrap();
    assert_eq!(target.len(), report.target.members + report.target.nonmembers);
    assert_eq!(target.n_members(), report.target.members);
    assert_eq!(target.dim(), 16);
}

#[test]
fn defended_runs_differ_only_on_the_non_member_path() {
    let lab = Lab::new(small_catalog(), Cache::disabled());
    let plain = lab.run(&base()).unwrap();
    let mut spec = base();
    // 150 items cannot host the 300-item pool of alpha 0.1 at k = 30
    spec.defense = Some(DefenseSpec { alpha: 0.1 });
    let err = lab.run(&spec).unwrap_err().to_string();
    assert!(err.contains("not enough candidate items"), "{err}");

    spec.defense = Some(DefenseSpec { alpha: 0.5 });
    let defended = lab.run(&spec).unwrap();
    assert_eq!(plain.target.member_hit_rate, defended.target.member_hit_rate);
    assert_ne!(plain.auc, defended.auc);
}

#[test]
fn cross_dataset_cells_need_both_sources() {
    let spec = ExperimentSpec::from_notation("MISI").unwrap();
    assert_eq!(spec.assumption(), Assumption::III);
    let err = run_experiment(&spec, &small_catalog(), &Cache::disabled())
        .unwrap_err()
        .to_string();
    assert!(err.contains("ml-1m"), "{err}");
}
