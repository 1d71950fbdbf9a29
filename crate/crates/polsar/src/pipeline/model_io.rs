//! Pipeline model container: `PLSRM1\n` magic, one JSON manifest line with
//! shapes, activations, normalizer stats and stage layout, then all layer
//! parameters as little-endian f64 (weights row-major, then bias, in stage
//! order). Round-trips are byte-exact.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decomp::{Family, NormStats};
use crate::error::{Error, Result};
use crate::neural::{Activation, DenseLayer, Mat, SoftmaxClassifier};
use crate::superpixels::SlicParams;

use super::PipelineModel;

const MAGIC: &[u8] = b"PLSRM1\n";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerManifest {
    out: usize,
    #[serde(rename = "in")]
    input: usize,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    bands: Vec<String>,
    class_names: Vec<String>,
    multilook_window: usize,
    families: Option<Vec<Family>>,
    slic: SlicParams,
    normalizer: NormStats,
    encoder1: Vec<LayerManifest>,
    encoder2: Vec<LayerManifest>,
    softmax: LayerManifest,
    softmax_l2: f64,
}

fn layer_manifest(layer: &DenseLayer) -> LayerManifest {
    LayerManifest {
        out: layer.out_dim(),
        input: layer.in_dim(),
        activation: layer.activation,
    }
}

fn push_layer_params(layer: &DenseLayer, payload: &mut Vec<u8>) {
    for w in &layer.weights.data {
        payload.extend_from_slice(&w.to_le_bytes());
    }
    for b in &layer.bias {
        payload.extend_from_slice(&b.to_le_bytes());
    }
}

fn read_layer(manifest: &LayerManifest, values: &mut impl Iterator<Item = f64>) -> Result<DenseLayer> {
    let mut layer = DenseLayer::new(manifest.out, manifest.input, manifest.activation);
    let needed = manifest.out * manifest.input + manifest.out;
    let mut collected = Vec::with_capacity(needed);
    for _ in 0..needed {
        collected.push(
            values
                .next()
                .ok_or_else(|| Error::MalformedModel("parameter payload too short".into()))?,
        );
    }
    if collected.iter().any(|v| !v.is_finite()) {
        return Err(Error::MalformedModel("non-finite parameter".into()));
    }
    let nw = manifest.out * manifest.input;
    layer.weights = Mat {
        rows: manifest.out,
        cols: manifest.input,
        data: collected[..nw].to_vec(),
    };
    layer.bias = collected[nw..].to_vec();
    Ok(layer)
}

/// Writes the model container; see the module docs for the layout.
pub fn save_model(model: &PipelineModel, path: &Path) -> Result<()> {
    model.validate()?;
    let manifest = Manifest {
        version: VERSION,
        bands: model.bands.clone(),
        class_names: model.class_names.clone(),
        multilook_window: model.multilook_window,
        families: model.families.clone(),
        slic: model.slic,
        normalizer: model.normalizer.clone(),
        encoder1: model.encoder1.iter().map(layer_manifest).collect(),
        encoder2: model.encoder2.iter().map(layer_manifest).collect(),
        softmax: layer_manifest(&model.classifier.layer),
        softmax_l2: model.classifier.l2_weight,
    };
    let mut payload = Vec::new();
    for layer in model.encoder1.iter().chain(model.encoder2.iter()) {
        push_layer_params(layer, &mut payload);
    }
    push_layer_params(&model.classifier.layer, &mut payload);

    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    let line = serde_json::to_string(&manifest)
        .map_err(|e| Error::MalformedModel(format!("manifest serialization: {e}")))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

/// Reads a model container back; parameters are restored bit-exactly.
pub fn load_model(path: &Path) -> Result<PipelineModel> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 7];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::MalformedModel("file shorter than magic".into()))?;
    if magic != MAGIC {
        return Err(Error::MalformedModel("bad magic, expected PLSRM1".into()));
    }
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        reader
            .read_exact(&mut byte)
            .map_err(|_| Error::MalformedModel("unterminated manifest line".into()))?;
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 1 << 24 {
            return Err(Error::MalformedModel("manifest exceeds 16 MiB".into()));
        }
    }
    let manifest: Manifest = serde_json::from_slice(&line)
        .map_err(|e| Error::MalformedModel(format!("manifest is not valid JSON: {e}")))?;
    if manifest.version != VERSION {
        return Err(Error::VersionMismatch(manifest.version));
    }

    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::MalformedModel(format!(
            "parameter payload has {} bytes, not a multiple of 8",
            bytes.len()
        )));
    }
    let expected: usize = manifest
        .encoder1
        .iter()
        .chain(manifest.encoder2.iter())
        .chain(std::iter::once(&manifest.softmax))
        .map(|l| l.out * l.input + l.out)
        .sum();
    if bytes.len() / 8 != expected {
        return Err(Error::MalformedModel(format!(
            "payload holds {} parameters, manifest demands {expected}",
            bytes.len() / 8
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));

    let encoder1 = manifest
        .encoder1
        .iter()
        .map(|m| read_layer(m, &mut values))
        .collect::<Result<Vec<_>>>()?;
    let encoder2 = manifest
        .encoder2
        .iter()
        .map(|m| read_layer(m, &mut values))
        .collect::<Result<Vec<_>>>()?;
    let softmax_layer = read_layer(&manifest.softmax, &mut values)?;

    let model = PipelineModel {
        bands: manifest.bands,
        class_names: manifest.class_names,
        multilook_window: manifest.multilook_window,
        families: manifest.families,
        normalizer: manifest.normalizer,
        encoder1,
        slic: manifest.slic,
        encoder2,
        classifier: SoftmaxClassifier {
            layer: softmax_layer,
            l2_weight: manifest.softmax_l2,
        },
    };
    model.validate().map_err(|e| match e {
        Error::MalformedModel(m) => Error::MalformedModel(m),
        other => Error::MalformedModel(other.to_string()),
    })?;
    Ok(model)
}
