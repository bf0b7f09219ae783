//! Class-per-folder dataset discovery, stratified splitting and the
//! manifest file.
//!
//! Manifest format (tab separated, UTF-8):
//!
//! ```text
//! #jutepest-manifest	1
//! #seed	46                    (or `-` when unsplit)
//! #ratios	0.7	0.15	0.15      (or `-`)
//! #digest	<hex>                 (optional; settings that produced it)
//! #class	<index>	<name>        (one per class, in index order)
//! #skip	<path>	<reason>      (undecodable files)
//! #warning	<text>
//! relative_path	class_name	class_index	split	width	height	channels
//! <one row per sample; split is train/validation/test or `-`>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use jutepest_core::split::{self, Split, SplitRatios};
use jutepest_core::ClassCatalog;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::imaging;

const MAGIC: &str = "#jutepest-manifest";
const VERSION: &str = "1";
const COLUMNS: &str = "relative_path\tclass_name\tclass_index\tsplit\twidth\theight\tchannels";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Relative to the dataset root, `/`-separated, starting with the
    /// class folder.
    pub path: String,
    pub class_index: usize,
    pub width: u32,
    pub height: u32,
    /// Channels of the source file (1-4); processed images are always RGB.
    pub channels: u8,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub catalog: ClassCatalog,
    pub samples: Vec<SampleRecord>,
    pub ratios: Option<SplitRatios>,
    pub seed: Option<u64>,
    pub skipped: Vec<SkipRecord>,
    pub warnings: Vec<String>,
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", content = "classes", rename_all = "lowercase")]
pub enum CatalogMode {
    /// One class per subdirectory of the root.
    #[default]
    Infer,
    /// Exactly these classes; other folders are ignored with a warning.
    Explicit(Vec<String>),
}

impl DatasetManifest {
    pub fn is_split(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.split.is_some())
    }

    pub fn class_name(&self, sample: &SampleRecord) -> &str {
        self.catalog.name(sample.class_index).unwrap_or("?")
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == Some(split))
    }

    /// Sample counts per class and split, `[class][train, validation, test]`.
    pub fn split_counts(&self) -> Vec<[usize; 3]> {
        let mut out = vec![[0; 3]; self.catalog.count()];
        for s in &self.samples {
            if let Some(sp) = s.split {
                out[s.class_index][sp as usize] += 1;
            }
        }
        out
    }
}

fn rel_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn is_hidden(entry: &walkdir::DirEntry) -> bool {
    entry.depth() > 0 && entry.file_name().to_str().is_some_and(|s| s.starts_with('.'))
}

/// Lists every decodable image under `<root>/<class>/`.
///
/// Undecodable files become skip records and empty class folders become
/// warnings; neither is fatal. A missing root or a root without class
/// folders is.
pub fn scan_source_tree(root: &Path, mode: &CatalogMode) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("dataset root {} does not exist or is not a directory", root.display())));
    }
    let mut folders: Vec<String> = fs::read_dir(root)
        .map_err(Error::io(root))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter(|n| !n.starts_with('.'))
        .collect();
    folders.sort();

    let mut warnings = Vec::new();
    let catalog = match mode {
        CatalogMode::Infer => {
            if folders.is_empty() {
                return Err(Error::Dataset(format!("no class folders found under {}", root.display())));
            }
            ClassCatalog::new(folders.iter().cloned())?
        }
        CatalogMode::Explicit(names) => {
            let catalog = ClassCatalog::new(names.iter().cloned())?;
            for f in &folders {
                if catalog.index_of(f).is_none() {
                    warnings.push(format!("folder `{f}` is not in the class list; ignored"));
                }
            }
            catalog
        }
    };

    let per_class: Vec<(Vec<SampleRecord>, Vec<SkipRecord>, Option<String>)> = catalog
        .names()
        .par_iter()
        .enumerate()
        .map(|(class_index, name)| {
            let dir = root.join(name);
            if !dir.is_dir() {
                return (Vec::new(), Vec::new(), Some(format!("class `{name}` has no folder")));
            }
            let mut files: Vec<PathBuf> = WalkDir::new(&dir)
                .into_iter()
                .filter_entry(|e| !is_hidden(e))
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .collect();
            files.sort();
            let mut samples = Vec::new();
            let mut skips = Vec::new();
            for f in files {
                let path = rel_path(root, &f);
                match imaging::decode(&f) {
                    Ok(raw) => samples.push(SampleRecord {
                        path,
                        class_index,
                        width: raw.width(),
                        height: raw.height(),
                        channels: raw.channels(),
                        split: None,
                    }),
                    Err(e) => skips.push(SkipRecord { path, reason: e.to_string() }),
                }
            }
            let warn = samples.is_empty().then(|| format!("class `{name}` has no decodable images"));
            (samples, skips, warn)
        })
        .collect();

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (s, k, w) in per_class {
        samples.extend(s);
        skipped.extend(k);
        warnings.extend(w);
    }
    for s in &skipped {
        log::warn!("skipping undecodable file {}: {}", s.path, s.reason);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DatasetManifest { catalog, samples, ratios: None, seed: None, skipped, warnings, digest: None })
}

/// Assigns splits per class; see [`jutepest_core::split::stratified_assign`].
pub fn stratified_split(manifest: &DatasetManifest, ratios: SplitRatios, seed: u64) -> Result<DatasetManifest> {
    let class_of: Vec<usize> = manifest.samples.iter().map(|s| s.class_index).collect();
    let splits = split::stratified_assign(&class_of, &manifest.catalog, &ratios, seed)?;
    let mut out = manifest.clone();
    for (s, sp) in out.samples.iter_mut().zip(splits) {
        s.split = Some(sp);
    }
    out.ratios = Some(ratios);
    out.seed = Some(seed);
    Ok(out)
}

fn check_field(value: &str, what: &str) -> Result<()> {
    if value.contains(['\t', '\n', '\r']) {
        return Err(Error::Dataset(format!("{what} `{}` contains a tab or newline", value.escape_debug())));
    }
    Ok(())
}

/// Manifest as text.
pub fn render_manifest(m: &DatasetManifest) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}\t{VERSION}");
    match m.seed {
        Some(s) => writeln!(out, "#seed\t{s}"),
        None => writeln!(out, "#seed\t-"),
    }
    .ok();
    match m.ratios {
        Some(r) => writeln!(out, "#ratios\t{}\t{}\t{}", r.train(), r.validation(), r.test()),
        None => writeln!(out, "#ratios\t-"),
    }
    .ok();
    if let Some(d) = &m.digest {
        check_field(d, "digest")?;
        let _ = writeln!(out, "#digest\t{d}");
    }
    for (i, name) in m.catalog.names().iter().enumerate() {
        check_field(name, "class name")?;
        let _ = writeln!(out, "#class\t{i}\t{name}");
    }
    for s in &m.skipped {
        check_field(&s.path, "path")?;
        let _ = writeln!(out, "#skip\t{}\t{}", s.path, s.reason.replace(['\t', '\n', '\r'], " "));
    }
    for w in &m.warnings {
        let _ = writeln!(out, "#warning\t{}", w.replace(['\t', '\n', '\r'], " "));
    }
    let _ = writeln!(out, "{COLUMNS}");
    for s in &m.samples {
        check_field(&s.path, "path")?;
        let split = s.split.map_or("-", Split::as_str);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.path,
            m.class_name(s),
            s.class_index,
            split,
            s.width,
            s.height,
            s.channels
        );
    }
    Ok(out)
}

pub fn persist_manifest(m: &DatasetManifest, path: &Path) -> Result<()> {
    imaging::write_file(path, render_manifest(m)?.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_manifest(&text, path)
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<DatasetManifest> {
    let err = |line: usize, msg: String| Error::parse(path, line, msg);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    match lines.next() {
        Some((_, l)) if l == format!("{MAGIC}\t{VERSION}") => {}
        Some((n, l)) if l.starts_with(MAGIC) => return Err(err(n, format!("unsupported manifest version `{l}`"))),
        Some((n, _)) => return Err(err(n, "not a manifest (missing header line)".into())),
        None => return Err(err(1, "empty file".into())),
    }

    let mut seed = None;
    let mut ratios = None;
    let mut digest = None;
    let mut classes: Vec<String> = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    let mut catalog: Option<ClassCatalog> = None;
    let mut samples = Vec::new();

    for (n, line) in lines.by_ref() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[0] {
            "#seed" => {
                seed = match fields.get(1) {
                    Some(&"-") => None,
                    Some(v) => Some(v.parse().map_err(|_| err(n, format!("bad seed `{v}`")))?),
                    None => return Err(err(n, "missing seed value".into())),
                }
            }
            "#ratios" => {
                ratios = match &fields[1..] {
                    ["-"] => None,
                    [a, b, c] => {
                        let p = |v: &str| v.parse::<f64>().map_err(|_| err(n, format!("bad ratio `{v}`")));
                        Some(SplitRatios::new(p(a)?, p(b)?, p(c)?).map_err(|e| err(n, e.to_string()))?)
                    }
                    _ => return Err(err(n, "expected three ratios or `-`".into())),
                }
            }
            "#digest" => digest = fields.get(1).map(|s| s.to_string()),
            "#class" => {
                let [_, idx, name] = fields[..] else {
                    return Err(err(n, "expected `#class<TAB>index<TAB>name`".into()));
                };
                if idx.parse::<usize>().ok() != Some(classes.len()) {
                    return Err(err(n, format!("class index `{idx}` out of order, expected {}", classes.len())));
                }
                classes.push(name.to_string());
            }
            "#skip" => {
                let [_, p, reason] = fields[..] else {
                    return Err(err(n, "expected `#skip<TAB>path<TAB>reason`".into()));
                };
                skipped.push(SkipRecord { path: p.into(), reason: reason.into() });
            }
            "#warning" => warnings.push(fields[1..].join("\t")),
            _ if line == COLUMNS => {
                let c = ClassCatalog::new(classes.clone()).map_err(|e| err(n, e.to_string()))?;
                if c.names() != classes.as_slice() {
                    return Err(err(n, "class list is not in canonical order".into()));
                }
                catalog = Some(c);
                break;
            }
            other => return Err(err(n, format!("unexpected header line starting `{other}`"))),
        }
    }
    let catalog = catalog.ok_or_else(|| err(text.lines().count(), "missing column header line".into()))?;

    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [path_, class_name, class_index, split_, width, height, channels] = fields[..] else {
            return Err(err(n, format!("expected 7 fields, found {}", fields.len())));
        };
        let Some(idx) = catalog.index_of(class_name) else {
            return Err(err(n, format!("row `{path_}`: unknown class `{class_name}`")));
        };
        if class_index.parse::<usize>().ok() != Some(idx) {
            return Err(err(n, format!("row `{path_}`: class index `{class_index}` does not match `{class_name}` ({idx})")));
        }
        let split = match split_ {
            "-" => None,
            s => Some(Split::parse(s).ok_or_else(|| err(n, format!("row `{path_}`: unknown split `{s}`")))?),
        };
        let num = |v: &str, what: &str| v.parse::<u32>().map_err(|_| err(n, format!("row `{path_}`: bad {what} `{v}`")));
        let channels = num(channels, "channels")?;
        if !(1..=4).contains(&channels) {
            return Err(err(n, format!("row `{path_}`: channels must be 1-4")));
        }
        samples.push(SampleRecord {
            path: path_.into(),
            class_index: idx,
            width: num(width, "width")?,
            height: num(height, "height")?,
            channels: channels as u8,
            split,
        });
    }
    Ok(DatasetManifest { catalog, samples, ratios, seed, skipped, warnings, digest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png(path: &Path, rgb: [u8; 3]) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        image::RgbImage::from_pixel(8, 6, image::Rgb(rgb)).save(path).unwrap();
    }

    fn small_manifest() -> DatasetManifest {
        let catalog = ClassCatalog::new(["Cutworm", "Black hairy"]).unwrap();
        let samples = vec![
            SampleRecord { path: "Black hairy/a.jpg".into(), class_index: 0, width: 10, height: 12, channels: 3, split: Some(Split::Train) },
            SampleRecord { path: "Cutworm/b.png".into(), class_index: 1, width: 5, height: 5, channels: 1, split: Some(Split::Test) },
            SampleRecord { path: "Cutworm/c.png".into(), class_index: 1, width: 7, height: 3, channels: 4, split: Some(Split::Validation) },
        ];
        DatasetManifest {
            catalog,
            samples,
            ratios: Some(SplitRatios::default()),
            seed: Some(46),
            skipped: vec![SkipRecord { path: "Cutworm/x.jpg".into(), reason: "bad data".into() }],
            warnings: vec!["something".into()],
            digest: Some("abc".into()),
        }
    }

    #[test]
    fn minimal_tree() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("only/a.png"), [1, 2, 3]);
        let m = scan_source_tree(dir.path(), &CatalogMode::Infer).unwrap();
        assert_eq!(m.catalog.count(), 1);
        assert_eq!(m.samples.len(), 1);
        assert_eq!(m.samples[0].class_index, 0);
        assert_eq!(m.samples[0].path, "only/a.png");
    }

    #[test]
    fn corrupt_file_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..10 {
            write_png(&dir.path().join(format!("{}/{i}.png", if i < 5 { "a" } else { "b" })), [i as u8; 3]);
        }
        fs::write(dir.path().join("b/broken.jpg"), b"\xff\xd8 truncated").unwrap();
        fs::create_dir_all(dir.path().join("empty")).unwrap();
        let m = scan_source_tree(dir.path(), &CatalogMode::Infer).unwrap();
        assert_eq!(m.samples.len(), 10);
        assert_eq!(m.skipped.len(), 1);
        assert_eq!(m.skipped[0].path, "b/broken.jpg");
        assert_eq!(m.catalog.count(), 3);
        assert!(m.warnings.iter().any(|w| w.contains("`empty`")));
    }

    #[test]
    fn fatal_scan_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(scan_source_tree(&dir.path().join("nope"), &CatalogMode::Infer), Err(Error::Dataset(_))));
        assert!(matches!(scan_source_tree(dir.path(), &CatalogMode::Infer), Err(Error::Dataset(_))));
    }

    #[test]
    fn explicit_catalog() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("a/1.png"), [0; 3]);
        write_png(&dir.path().join("extra/1.png"), [0; 3]);
        let m = scan_source_tree(dir.path(), &CatalogMode::Explicit(vec!["a".into(), "b".into()])).unwrap();
        assert_eq!(m.catalog.names(), ["a", "b"]);
        assert_eq!(m.samples.len(), 1);
        assert_eq!(m.warnings.len(), 2);
    }

    #[test]
    fn round_trip() {
        let m = small_manifest();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        persist_manifest(&m, &p).unwrap();
        assert_eq!(load_manifest(&p).unwrap(), m);
        let unsplit = DatasetManifest { ratios: None, seed: None, digest: None, ..m.clone() };
        let unsplit = DatasetManifest {
            samples: unsplit.samples.iter().cloned().map(|s| SampleRecord { split: None, ..s }).collect(),
            ..unsplit
        };
        persist_manifest(&unsplit, &p).unwrap();
        assert_eq!(load_manifest(&p).unwrap(), unsplit);
    }

    #[test]
    fn unknown_class_names_row() {
        let text = render_manifest(&small_manifest()).unwrap().replace("Cutworm/b.png\tCutworm", "Cutworm/b.png\tMoth");
        match parse_manifest(&text, Path::new("m.tsv")) {
            Err(Error::Parse { line, message, .. }) => {
                assert!(message.contains("Cutworm/b.png") && message.contains("Moth"), "{message}");
                let expected = text.lines().position(|l| l.starts_with("Cutworm/b.png")).unwrap() + 1;
                assert_eq!(line, expected);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        let good = render_manifest(&small_manifest()).unwrap();
        for (from, to) in [("#jutepest-manifest\t1", "#jutepest-manifest\t9"), ("\t46\n", "\tx\n"), ("\t12\t3\n", "\t12\n")] {
            let bad = good.replacen(from, to, 1);
            assert!(matches!(parse_manifest(&bad, Path::new("m")), Err(Error::Parse { .. })), "{from}");
        }
    }

    #[test]
    fn split_assigns_everything() {
        let mut m = small_manifest();
        m.samples = (0..40)
            .map(|i| SampleRecord { path: format!("c/{i}.png"), class_index: i % 2, width: 1, height: 1, channels: 3, split: None })
            .collect();
        let s = stratified_split(&m, SplitRatios::default(), 46).unwrap();
        assert!(s.is_split());
        assert_eq!(s.split_counts(), vec![[14, 3, 3], [14, 3, 3]]);
        assert_eq!(stratified_split(&m, SplitRatios::default(), 46).unwrap(), s);
    }
}
