//! A small on-disk world for driving the `extgate` binary: four stores, a
//! gazetteer, a QA dataset whose retrieval need tracks entity popularity,
//! and a config with a reduced grid.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use extgate_core::QuestionRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

pub const N_RECORDS: usize = 160;

const SYLLABLES: [&str; 12] = ["zor", "van", "kel", "miro", "tash", "ulen", "pra", "dost", "ive", "quen", "baro", "lith"];
const KINDS: [&str; 5] = ["ridge", "harbor", "abbey", "valley", "bridge"];

pub const GRIDS: &str = r#"
[logreg]
C = [0.1, 1]
[knn]
n_neighbors = [5, 9]
weights = ["uniform", "distance"]
[dtree]
max_depth = [3, 5]
[gboost]
n_estimators = [25]
max_depth = [3]
"#;

pub struct Fixture {
    _dir: TempDir,
    pub root: PathBuf,
    pub records: Vec<QuestionRecord>,
}

pub fn entity_names() -> Vec<String> {
    (0..40)
        .map(|i| {
            let a = SYLLABLES[i % SYLLABLES.len()];
            let b = SYLLABLES[(i * 7 + 3) % SYLLABLES.len()];
            format!("{a}{b} {}", KINDS[i % KINDS.len()])
        })
        .collect()
}

fn make_records(rng: &mut ChaCha8Rng, n: usize, names: &[String], views: &[u64]) -> Vec<QuestionRecord> {
    let templates = [
        "Who founded {e}?",
        "When was {e} built?",
        "How many people live near {e}?",
        "Which river flows past {e}?",
        "Is {e} older than {f}?",
    ];
    (0..n)
        .map(|i| {
            let k = rng.gen_range(0..names.len());
            let other = (k + 1 + rng.gen_range(0..names.len() - 1)) % names.len();
            let q = templates[i % templates.len()]
                .replace("{e}", &names[k])
                .replace("{f}", &names[other]);
            let gold = format!("answer{i}");
            // popular entities are usually known without retrieval
            let popular = views[k] >= 5000;
            let knows = rng.gen_bool(if popular { 0.85 } else { 0.15 });
            let helped = rng.gen_bool(0.75);
            let wrong = format!("guess{}", rng.gen_range(0..1000));
            QuestionRecord {
                id: format!("q{i:03}"),
                question: q,
                gold_answers: vec![gold.clone()],
                answer_without_retrieval: if knows { format!("It was {gold}.") } else { wrong.clone() },
                answer_with_retrieval: if helped { format!("{gold}, per the source") } else { wrong },
                contexts: vec![
                    format!("{} was founded by {gold} long ago", names[k]),
                    "An unrelated passage about weather".to_string(),
                ],
                dataset_tag: "fixture".into(),
                feature_overrides: None,
            }
        })
        .collect()
}

impl Fixture {
    pub fn new() -> Self {
        Self::with_records(N_RECORDS)
    }

    pub fn with_records(n: usize) -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let names = entity_names();
        let views: Vec<u64> = (0..names.len()).map(|i| if i % 2 == 0 { 20_000 + i as u64 } else { 40 + i as u64 }).collect();

        let mut triples = String::from("kg_id\tsubject_count\tobject_count\n");
        let mut pageviews = String::from("kg_id\tviews\n");
        let mut know = String::from("kg_id\tscore\n");
        let mut gazetteer = String::from("alias\tkg_id\n");
        for (i, name) in names.iter().enumerate() {
            let _ = writeln!(triples, "E{i}\t{}\t{}", rng.gen_range(0..500), rng.gen_range(0..500));
            let _ = writeln!(pageviews, "E{i}\t{}", views[i]);
            let _ = writeln!(gazetteer, "{name}\tE{i}");
            let score = match i {
                0 => 140.0,
                1 => -5.0,
                _ => rng.gen_range(0.0..100.0f64).round(),
            };
            let _ = writeln!(know, "E{i}\t{score}");
        }
        let records = make_records(&mut rng, n, &names, &views);

        let corpus: Vec<String> = records
            .iter()
            .flat_map(|r| r.contexts.iter().cloned().chain([r.question.clone()]))
            .collect();
        let corpus = corpus.join("\n");
        let freq = extgate_core::stores::FrequencyStore::from_corpus(&corpus);

        let write = |name: &str, text: &str| std::fs::write(root.join(name), text).expect("write fixture");
        write("triples.tsv", &triples);
        write("pageviews.tsv", &pageviews);
        write("knowledgability.tsv", &know);
        write("gazetteer.tsv", &gazetteer);
        write("frequency.tsv", &freq.to_tsv());
        write("corpus.txt", &corpus);
        write("grids.toml", GRIDS);
        write("textclf.tsv", &textclf_corpus());
        extgate_core::record::write_dataset(&root.join("dataset.jsonl"), &records).expect("write dataset");
        write("config.toml", &config_toml(""));
        Self { _dir: dir, root, records }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    pub fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).expect("write fixture file");
        p
    }

    pub fn write_records(&self, name: &str, records: &[QuestionRecord]) -> PathBuf {
        let p = self.path(name);
        extgate_core::record::write_dataset(&p, records).expect("write dataset");
        p
    }
}

/// Fixture config; `extra` is appended verbatim.
pub fn config_toml(extra: &str) -> String {
    format!(
        r#"seed = 7
out = "out"

[stores]
triples = "triples.tsv"
pageviews = "pageviews.tsv"
frequency = "frequency.tsv"
knowledgability = "knowledgability.tsv"

[linker]
gazetteer = "gazetteer.tsv"

[train]
grids = "grids.toml"
families = ["logreg", "knn", "dtree", "gboost"]
n_seeds = 2
validation_rows = 40

[evaluate]
importance_repeats = 3
{extra}"#
    )
}

fn textclf_corpus() -> String {
    let mut s = String::from("label\ttext\n");
    for (label, texts) in [
        ("count", ["how many moons does mars have", "how many people live here", "number of bridges in town"]),
        ("yesno", ["is paris in france", "does the river freeze", "was the abbey rebuilt"]),
        ("generic", ["who founded the harbor", "where is the valley", "what is the capital"]),
    ] {
        for t in texts {
            let _ = writeln!(s, "{label}\t{t}");
        }
    }
    s
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_extgate"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn extgate")
}

pub fn run_with_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn extgate");
    let mut stdin = child.stdin.take().expect("stdin");
    let input = input.to_string();
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(input.as_bytes());
    });
    let out = child.wait_with_output().expect("wait for extgate");
    writer.join().expect("stdin writer");
    out
}

pub fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed ({}):\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("reading {}: {e}", p.display()))
}
