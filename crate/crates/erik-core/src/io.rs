//! File formats: TOML skeleton and run-configuration files, the bundled
//! catalog, LALUT dumps, and six-significant-digit number formatting.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::catalog_specs;
use crate::error::{Error, Result};
use crate::erik::ErikHyperparams;
use crate::eval::SweepConfig;
use crate::jacobian::DlsConfig;
use crate::skeleton::{Lalut, LinkSpec, Skeleton};

/// Formats with six significant digits, dropping trailing zeros.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    rounded.to_string()
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn toml_err(e: toml::de::Error) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub name: String,
    pub links: Vec<LinkSpec>,
}

impl SkeletonFile {
    pub fn from_skeleton(skel: &Skeleton) -> SkeletonFile {
        SkeletonFile {
            name: skel.name.clone(),
            links: skel.specs(),
        }
    }

    pub fn parse(text: &str) -> Result<SkeletonFile> {
        toml::from_str(text).map_err(toml_err)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("skeleton files serialise")
    }

    pub fn build(&self) -> Result<Skeleton> {
        Skeleton::new(self.name.clone(), &self.links)
    }
}

pub fn load_skeleton(path: &Path) -> Result<Skeleton> {
    SkeletonFile::parse(&std::fs::read_to_string(path)?)?.build()
}

const BUNDLED: [(char, &str); 7] = [
    ('A', include_str!("../catalog/A.toml")),
    ('B', include_str!("../catalog/B.toml")),
    ('C', include_str!("../catalog/C.toml")),
    ('D', include_str!("../catalog/D.toml")),
    ('E', include_str!("../catalog/E.toml")),
    ('F', include_str!("../catalog/F.toml")),
    ('G', include_str!("../catalog/G.toml")),
];

/// Text of the bundled file for a catalog skeleton.
pub fn bundled_catalog_file(id: char) -> Option<&'static str> {
    let id = id.to_ascii_uppercase();
    BUNDLED.iter().find(|(c, _)| *c == id).map(|(_, t)| *t)
}

/// The file a catalog skeleton is generated into.
pub fn catalog_file_text(id: char) -> Result<String> {
    Ok(SkeletonFile {
        name: id.to_ascii_uppercase().to_string(),
        links: catalog_specs(id)?,
    }
    .to_toml())
}

/// Catalog id (case-insensitive) or a path to a skeleton file.
pub fn resolve_skeleton(name: &str) -> Result<Skeleton> {
    let mut chars = name.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if let Some(text) = bundled_catalog_file(c) {
            return SkeletonFile::parse(text)?.build();
        }
    }
    load_skeleton(Path::new(name))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub erik: ErikHyperparams,
    pub dls: DlsConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let c: RunConfig = toml::from_str(text).map_err(toml_err)?;
        c.erik.validate()?;
        c.sweep.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialise")
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }
}

/// Writes both signed tables of a joint's LALUT with the step in a comment
/// header.
pub fn write_lalut<W: Write>(lalut: &Lalut, header: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {header} step={}", lalut.step)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["table", "latitude", "angle"]).map_err(csv_err)?;
    for (name, t) in [("positive", &lalut.positive), ("negative", &lalut.negative)] {
        for &(lat, a) in t.iter() {
            w.write_record([name.to_string(), sig6(lat), sig6(a)]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_lalut<R: Read>(mut input: R) -> Result<Lalut> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let step = text
        .lines()
        .next()
        .and_then(|l| l.split_whitespace().find_map(|w| w.strip_prefix("step=")))
        .ok_or_else(|| Error::Parse("LALUT header lacks step=".into()))?
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("LALUT step: {e}")))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut lalut = Lalut {
        step,
        ..Lalut::default()
    };
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse("short LALUT row".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("LALUT value: {e}")))
        };
        let entry = (num(1)?, num(2)?);
        match rec.get(0) {
            Some("positive") => lalut.positive.push(entry),
            Some("negative") => lalut.negative.push(entry),
            other => return Err(Error::Parse(format!("unknown LALUT table {other:?}"))),
        }
    }
    Ok(lalut)
}
