use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use hrt_core::dataset::{read_feature_csv, Standardizer, TargetColumn};
use hrt_core::persist::{model_from_json, model_to_json, AnyModel};
use hrt_core::{Dataset, Matrix, SyntheticFunction, SyntheticSpec};

use crate::failure::{CliResult, Failure, EXIT_DATA, EXIT_OTHER};

pub const SCHEMA_VERSION: u32 = 1;

/// A dataset argument resolved to data.
pub struct LoadedData {
    pub data: Dataset,
    /// Set when the argument was a synthetic spec.
    pub synthetic: Option<SyntheticSpec>,
}

impl LoadedData {
    pub fn function(&self) -> Option<SyntheticFunction> {
        self.synthetic.map(|s| s.function)
    }
}

/// A synthetic spec when the text starts with a known function name and no
/// file of that name exists.
pub fn synthetic_spec(text: &str) -> CliResult<Option<SyntheticSpec>> {
    if Path::new(text).exists() {
        return Ok(None);
    }
    let name = text.split(':').next().unwrap_or_default();
    if name.parse::<SyntheticFunction>().is_err() {
        return Ok(None);
    }
    text.parse().map(Some).map_err(|e| Failure::config(format!("dataset spec `{text}`: {e}")))
}

pub fn load_data(text: &str, target: &TargetColumn, header: bool) -> CliResult<LoadedData> {
    if let Some(spec) = synthetic_spec(text)? {
        return Ok(LoadedData { data: spec.generate()?, synthetic: Some(spec) });
    }
    let data = hrt_core::dataset::load_csv(text, target, header).map_err(|e| Failure::from(e).context(text))?;
    Ok(LoadedData { data, synthetic: None })
}

pub fn load_features(path: &str, header: bool) -> CliResult<Matrix> {
    let file = fs::File::open(path).map_err(|e| Failure::from(e).context(path))?;
    read_feature_csv(file, header).map_err(|e| Failure::from(e).context(path))
}

/// A model file: the core model document plus the resolved run
/// configuration and, if training standardized the inputs, the fitted map.
pub struct ModelFile {
    pub model: AnyModel,
    pub standardizer: Option<Standardizer>,
}

impl ModelFile {
    pub fn save(&self, path: &Path, run_config: &Value) -> CliResult<()> {
        let mut doc: Value = serde_json::from_str(&model_to_json(&self.model)?)?;
        let obj = doc.as_object_mut().ok_or_else(|| Failure::new(EXIT_OTHER, "model document is not an object"))?;
        obj.insert("run_config".into(), run_config.clone());
        if let Some(s) = &self.standardizer {
            obj.insert("standardizer".into(), serde_json::to_value(s)?);
        }
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Failure::new(EXIT_OTHER, format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let ctx = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Failure::from(e).context(&ctx))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_DATA, format!("{ctx}: {e}")))?;
        let standardizer = match doc.get("standardizer") {
            Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| Failure::new(EXIT_DATA, format!("{ctx}: {e}")))?),
            None => None,
        };
        let model = model_from_json(&text).map_err(|e| Failure::from(e).context(&ctx))?;
        Ok(Self { model, standardizer })
    }

    /// Applies the stored standardizer, after checking the feature count.
    pub fn prepare(&self, x: &Matrix) -> CliResult<Matrix> {
        let d = self.model.d();
        if x.cols() != d {
            return Err(hrt_core::Error::DimensionMismatch { expected: d, got: x.cols() }.into());
        }
        Ok(match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.clone(),
        })
    }

    pub fn predict(&self, x: &Matrix) -> CliResult<Vec<f64>> {
        let x = self.prepare(x)?;
        Ok(x.iter_rows().map(|r| self.model.predict(r)).collect())
    }
}

/// Writes `value` as pretty JSON, wrapped with the command name and schema
/// version.
pub fn write_json<T: Serialize>(path: &Path, command: &str, value: &T) -> CliResult<()> {
    let mut doc = serde_json::to_value(value)?;
    if let Some(obj) = doc.as_object_mut() {
        obj.insert("command".into(), Value::from(command));
        obj.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    }
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::new(EXIT_OTHER, format!("{}: {e}", path.display())))
}

/// Opens `path` for writing, or stdout when absent.
pub fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            fs::File::create(p).map_err(|e| Failure::new(EXIT_OTHER, format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}
