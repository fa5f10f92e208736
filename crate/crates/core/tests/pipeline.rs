//! End-to-end runs over a small corpus with the rule-driven mock model.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use casegraph_core::extraction::{DEFINITIONS_HEADING, FILTER_HEADING, ORDER_HEADING};
use casegraph_core::gateway::{CacheMode, Gateway, MockRules, ReplayStore, RuleMockBackend};
use casegraph_core::ingest::CaseDocument;
use casegraph_core::runner::ablation::{deterministic_files, rerender_reports, run_ablation, PreparedCorpus};
use casegraph_core::runner::pipeline::{COREF_DIR, PROMPTS_DIR};
use casegraph_core::runner::{run_pipeline, ConfigId, PipelineConfig, Settings, Toolkit};

const RULES: &str = "
alias PERSON | Richard Stone | Richard Stone
alias PERSON | Stone | Richard Stone
alias PERSON | the driver | Richard Stone
entity PERSON | Richard Stone
entity PERSON | Stone
entity PERSON | the driver
entity LOCATION | San Antonio
entity LOCATION | Laredo
entity ROUTES | Interstate 35
entity ORGANIZATION | District Court | noise
entity MEANS_OF_TRANSPORTATION | Nissan Maxima
entity SMUGGLED_ITEMS | undocumented migrants
";

const CASE: &str = "Richard Stone drove a Nissan Maxima on Interstate 35 toward San Antonio.\n\
The driver carried four undocumented migrants from Laredo. Stone was arrested.\n\n\
The District Court denied the motion.";

fn settings(root: &Path) -> Settings {
    Settings {
        out_dir: root.join("runs"),
        chunk_size: 20,
        overlap: 5,
        ..Settings::default()
    }
}

fn kit(root: &Path) -> Toolkit {
    let gw = Gateway::new(Arc::new(RuleMockBackend::new(MockRules::parse(RULES).unwrap())));
    Toolkit::with_gateway(settings(root), gw).unwrap()
}

fn corpus() -> PreparedCorpus {
    PreparedCorpus {
        documents: vec![
            CaseDocument::pre_extracted("case01", CASE),
            CaseDocument::pre_extracted("case02", CASE.replace("Laredo", "San Antonio")),
        ],
        failures: Vec::new(),
    }
}

fn read_all(files: &[std::path::PathBuf]) -> Vec<(String, Vec<u8>)> {
    files.iter().map(|p| (p.display().to_string(), fs::read(p).unwrap())).collect()
}

#[test]
fn corekg_is_deterministic_and_resolves_aliases() {
    let tmp = tempfile::tempdir().unwrap();
    let kit = kit(tmp.path());
    let cfg = PipelineConfig::new(ConfigId::Corekg, &kit.settings);
    let doc = CaseDocument::pre_extracted("case01", CASE);
    let a = run_pipeline(&doc, &cfg, &kit).unwrap();
    let first = read_all(&a.artifacts);
    let b = run_pipeline(&doc, &cfg, &kit).unwrap();
    assert_eq!(first, read_all(&b.artifacts));
    assert_eq!(a.coref_passes, 7);
    let persons: Vec<_> = a.graph.nodes.keys().filter(|k| k.name.contains("STONE") || k.name.contains("DRIVER")).collect();
    assert_eq!(persons.len(), 1, "{persons:?}");
    assert!(!a.graph.nodes.keys().any(|k| k.name.contains("COURT")));
}

#[test]
fn baseline_keeps_aliases_and_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let kit = kit(tmp.path());
    let cfg = PipelineConfig::new(ConfigId::Graphrag, &kit.settings);
    let o = run_pipeline(&CaseDocument::pre_extracted("case01", CASE), &cfg, &kit).unwrap();
    assert_eq!(o.coref_passes, 0);
    assert!(o.graph.nodes.keys().any(|k| k.name == "DISTRICT COURT"));
    assert!(o.evaluation.metrics.noisy_count >= 1);
    assert!(o.evaluation.metrics.duplicate_count >= 1);
}

#[test]
fn config_gating_and_shared_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let kit = kit(tmp.path());
    let run = run_ablation(&corpus(), &kit).unwrap();
    assert!(run.manifest.failures.is_empty());
    assert!(run.manifest.missing_artifacts(&run.run_dir).is_empty());
    for c in ConfigId::ALL {
        for case in ["case01", "case02"] {
            let dir = PipelineConfig::new(c, &kit.settings).case_dir(case);
            assert_eq!(dir.join(COREF_DIR).exists(), c.coref_enabled(), "{c}/{case}");
            for p in fs::read_dir(dir.join(PROMPTS_DIR)).unwrap() {
                let text = fs::read_to_string(p.unwrap().path()).unwrap();
                let structured = c.prompt_variant().to_string() == "structured";
                for h in [ORDER_HEADING, DEFINITIONS_HEADING, FILTER_HEADING] {
                    assert_eq!(text.contains(h), structured, "{c}/{case}: {h}");
                }
            }
        }
        let entry = run.manifest.cases.iter().find(|e| e.config_id == c).unwrap();
        assert_eq!(entry.coref_passes > 0, c.coref_enabled());
    }
    let chunks = |c: ConfigId| fs::read(PipelineConfig::new(c, &kit.settings).case_dir("case01").join("chunks/chunks.jsonl")).unwrap();
    assert_eq!(chunks(ConfigId::Graphrag), chunks(ConfigId::NoCoref));
}

#[test]
fn ablation_outputs_repeat_and_reports_rerender() {
    let tmp = tempfile::tempdir().unwrap();
    let kit = kit(tmp.path());
    let run = run_ablation(&corpus(), &kit).unwrap();
    let files = deterministic_files(&run.run_dir).unwrap();
    let before = read_all(&files);
    run_ablation(&corpus(), &kit).unwrap();
    assert_eq!(before, read_all(&deterministic_files(&run.run_dir).unwrap()));

    let again = tmp.path().join("again");
    rerender_reports(&run.run_dir.join("metrics.csv"), &kit.settings, &again).unwrap();
    for name in ["duplication_noise", "degradation", "graph_stats"] {
        for ext in ["csv", "txt"] {
            let f = format!("{name}.{ext}");
            assert_eq!(fs::read(run.run_dir.join(&f)).unwrap(), fs::read(again.join(&f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn failing_case_is_recorded_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ReplayStore::open(tmp.path().join("empty")).unwrap();
    let mut s = settings(tmp.path());
    s.configs = vec![ConfigId::NoCoref];
    let kit = Toolkit::with_gateway(s, Gateway::replay_only(store)).unwrap();
    let run = run_ablation(&corpus(), &kit).unwrap();
    assert_eq!(run.manifest.failures.len(), 2);
    assert!(run.manifest.failures.iter().all(|f| f.kind == "cache-miss"));

    let mut strict = settings(tmp.path());
    strict.configs = vec![ConfigId::NoCoref];
    strict.fail_fast = true;
    let store = ReplayStore::open(tmp.path().join("empty")).unwrap();
    let kit = Toolkit::with_gateway(strict, Gateway::replay_only(store)).unwrap();
    assert!(run_ablation(&corpus(), &kit).is_err());
}

#[test]
fn recorded_run_replays_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let backend = Arc::new(RuleMockBackend::new(MockRules::parse(RULES).unwrap()));
    let rec = Gateway::new(backend).with_store(ReplayStore::open(&cache).unwrap(), CacheMode::Record);
    let mut s = settings(tmp.path());
    s.run_id = "recorded".into();
    let a = run_ablation(&corpus(), &Toolkit::with_gateway(s.clone(), rec).unwrap()).unwrap();
    s.run_id = "replayed".into();
    let rep = Gateway::replay_only(ReplayStore::open(&cache).unwrap());
    let b = run_ablation(&corpus(), &Toolkit::with_gateway(s, rep).unwrap()).unwrap();
    let rel = |root: &Path| -> Vec<(String, Vec<u8>)> {
        deterministic_files(root)
            .unwrap()
            .iter()
            .map(|p| (p.strip_prefix(root).unwrap().display().to_string(), fs::read(p).unwrap()))
            .collect()
    };
    assert_eq!(rel(&a.run_dir), rel(&b.run_dir));
}

#[test]
fn overrides_are_applied_per_case() {
    let tmp = tempfile::tempdir().unwrap();
    let ov = tmp.path().join("overrides");
    fs::create_dir_all(&ov).unwrap();
    fs::write(ov.join("case01.graphrag.overrides"), "noisy LAREDO::LOCATION\nclean DISTRICT COURT::ORGANIZATION\n").unwrap();
    let mut s = settings(tmp.path());
    s.overrides_dir = Some(ov);
    let gw = Gateway::new(Arc::new(RuleMockBackend::new(MockRules::parse(RULES).unwrap())));
    let kit = Toolkit::with_gateway(s, gw).unwrap();
    let cfg = PipelineConfig::new(ConfigId::Graphrag, &kit.settings);
    let o = run_pipeline(&CaseDocument::pre_extracted("case01", CASE), &cfg, &kit).unwrap();
    assert_eq!(o.evaluation.noisy_ids, vec!["LAREDO::LOCATION".to_string()]);
}

#[test]
fn shipped_config_file_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.ini");
    let mut s = Settings::default();
    s.apply_ini(&fs::read_to_string(&path).unwrap(), path.parent().unwrap()).unwrap();
    s.validate().unwrap();
    assert_eq!(s.backend.backend, "ollama");
    assert_eq!((s.chunk_size, s.overlap), (300, 50));
    assert_eq!(s.configs, ConfigId::ALL.to_vec());
}
