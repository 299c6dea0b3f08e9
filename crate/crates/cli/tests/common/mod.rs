#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

pub const DISEASES: [&str; 12] = [
    "rheumatoid arthritis",
    "breast cancer",
    "cystic fibrosis",
    "type 2 diabetes",
    "Huntington disease",
    "familial adenomatous polyposis",
    "asthma",
    "hemophilia A",
    "Crohn disease",
    "ovarian cancer",
    "sickle cell anemia",
    "gout",
];

const FRAMES: [&str; 4] = [
    "Patients with {} showed elevated markers .",
    "The risk of {} increased with age .",
    "We report a family affected by {} .",
    "Treatment options for {} remain limited .",
];

fn conll_sentence(frame: &str, disease: &str) -> String {
    let mut out = String::new();
    for word in frame.split(' ') {
        if word == "{}" {
            for (i, w) in disease.split(' ').enumerate() {
                let tag = if i == 0 { "B-Disease" } else { "I-Disease" };
                out.push_str(&format!("{w}\t{tag}\n"));
            }
        } else {
            out.push_str(&format!("{word}\tO\n"));
        }
    }
    out + "\n"
}

pub struct Workspace {
    pub dir: TempDir,
}

impl Workspace {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn config(&self) -> PathBuf {
        self.dir.path().join("run.conf")
    }

    pub fn runs(&self) -> PathBuf {
        self.dir.path().join("runs")
    }

    pub fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(&p, text).unwrap();
        p
    }

    /// Run directories of `command` in creation order.
    pub fn run_dirs(&self, command: &str) -> Vec<PathBuf> {
        let mut dirs: Vec<PathBuf> = fs::read_dir(self.runs())
            .map(|rd| rd.filter_map(Result::ok).map(|e| e.path()).collect())
            .unwrap_or_default();
        dirs.retain(|p| {
            let name = p.file_name().unwrap().to_str().unwrap();
            name.starts_with(&format!("{command}-")) && name.rsplit('-').next().unwrap().len() == 3
        });
        dirs.sort();
        dirs
    }

    pub fn clinsynth(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_clinsynth"))
            .args(args)
            .current_dir(self.path())
            .output()
            .expect("binary runs")
    }
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// NER workspace: 12 diseases x 4 frames in train, 12 test sentences.
pub fn ner_workspace(extra_config: &str) -> Workspace {
    let ws = Workspace {
        dir: tempfile::tempdir().unwrap(),
    };
    let train: String = DISEASES
        .iter()
        .flat_map(|d| FRAMES.iter().map(move |f| conll_sentence(f, d)))
        .collect();
    let test: String = DISEASES
        .iter()
        .enumerate()
        .map(|(i, d)| conll_sentence(FRAMES[(i + 1) % FRAMES.len()], d))
        .collect();
    ws.write("data/train.conll", &train);
    ws.write("data/test.conll", &test);
    ws.write(
        "data/ncbi.manifest",
        "name: ncbi-disease\ntask: NER\ntrain: train.conll\ntest: test.conll\nentity_types: Disease\n",
    );
    ws.write(
        "run.conf",
        &format!(
            "[run]\ndataset: data/ncbi.manifest\noutput_dir: runs\nrng_seed: 7\n\n[provider]\nkind: mock\n\n{extra_config}"
        ),
    );
    ws
}

const GENES: [&str; 4] = ["BRCA1", "APOE", "TP53", "CFTR"];

/// GAD-style RE workspace with train, test and a pipe-form seed pool.
pub fn re_workspace(extra_config: &str) -> Workspace {
    let ws = Workspace {
        dir: tempfile::tempdir().unwrap(),
    };
    let mut train = String::new();
    for i in 0..20 {
        train.push_str(&format!(
            "Polymorphism {i} of @GENE$ was associated with @DISEASE$ susceptibility.\tYes\n"
        ));
        train.push_str(&format!(
            "No link between @GENE$ and @DISEASE$ was found in cohort {i}.\tNo\n"
        ));
    }
    let mut test = String::new();
    for (i, g) in GENES.iter().enumerate() {
        test.push_str(&format!(
            "Carriers of the {g} variant @GENE$ had higher @DISEASE$ risk in study {i}.\tYes\n"
        ));
        test.push_str(&format!(
            "We found no association between @GENE$ and @DISEASE$ in trial {i}.\tNo\n"
        ));
    }
    let mut pool = String::new();
    for i in 0..6 {
        pool.push_str(&format!(
            "| Expression of @GENE$ predicts @DISEASE$ outcome {i}. | Yes |\n"
        ));
        pool.push_str(&format!(
            "| @GENE$ levels did not differ in @DISEASE$ group {i}. | No |\n"
        ));
    }
    ws.write("data/gad/train.tsv", &train);
    ws.write("data/gad/test.tsv", &test);
    ws.write("data/gad/seeds.txt", &pool);
    ws.write(
        "data/gad.manifest",
        "name: gad\ntask: RE\ntrain: gad/train.tsv\ntest: gad/test.tsv\nseed-pool: gad/seeds.txt\n",
    );
    ws.write(
        "run.conf",
        &format!(
            "[run]\ndataset: data/gad.manifest\noutput_dir: runs\nrng_seed: 3\n\n[provider]\nkind: mock\n\n{extra_config}"
        ),
    );
    ws
}
