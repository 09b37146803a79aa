//! On-disk cache of validated generated functions.
//!
//! Layout under the cache directory:
//!
//! ```text
//! <slug>_<hash>.<ext>    generated source
//! <slug>_<hash>.json     sidecar metadata (digest inputs, retries used)
//! .<slug>_<hash>.lock    advisory lock serializing generation per key
//! ```

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{GeneratedFunction, TaskSpec};
use crate::template::PromptTemplate;

const SLUG_CHARS: usize = 40;

/// Filesystem-safe stem derived from the template's task text.
pub fn slug(template: &PromptTemplate) -> String {
    template
        .substitute_comment()
        .chars()
        .take(SLUG_CHARS)
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

/// Stable 8-hex-digit digest over everything that shapes the generated
/// code: template text, entry name, return and parameter schemas, and the
/// target language.
pub fn digest(spec: &TaskSpec) -> String {
    let params: Option<Vec<(String, String)>> = spec
        .param_schemas
        .as_ref()
        .map(|ps| ps.iter().map(|(n, s)| (n.clone(), s.to_string())).collect());
    let inputs = json!({
        "template": spec.template.raw(),
        "name": spec.name,
        "return": spec.return_schema.as_ref().map_or("void".to_string(), ToString::to_string),
        "params": params,
        "language": spec.target_language.name(),
    });
    let hash = Sha256::digest(inputs.to_string().as_bytes());
    hex::encode(&hash[..4])
}

/// `<slug>_<hash>`.
pub fn stem(spec: &TaskSpec) -> String {
    format!("{}_{}", slug(&spec.template), digest(spec))
}

pub fn source_path(spec: &TaskSpec, cache_dir: &Path) -> PathBuf {
    cache_dir.join(format!("{}.{}", stem(spec), spec.target_language.extension()))
}

pub fn metadata_path(spec: &TaskSpec, cache_dir: &Path) -> PathBuf {
    cache_dir.join(format!("{}.json", stem(spec)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMetadata {
    pub version: u32,
    pub digest: String,
    pub name: String,
    pub language: String,
    pub template: String,
    pub return_schema: String,
    pub param_schemas: Option<Vec<(String, String)>>,
    pub retries_used: u32,
}

impl CacheMetadata {
    fn for_spec(spec: &TaskSpec, retries_used: u32) -> Self {
        CacheMetadata {
            version: 1,
            digest: digest(spec),
            name: spec.name.clone(),
            language: spec.target_language.name().to_string(),
            template: spec.template.raw().to_string(),
            return_schema: spec.return_schema.as_ref().map_or("void".to_string(), ToString::to_string),
            param_schemas: spec
                .param_schemas
                .as_ref()
                .map(|ps| ps.iter().map(|(n, s)| (n.clone(), s.to_string())).collect()),
            retries_used,
        }
    }
}

fn write_atomic(dir: &Path, target: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(target).map_err(|e| e.error)?;
    Ok(())
}

/// Writes `source` (and its sidecar) atomically and returns the source
/// path.
pub fn store(spec: &TaskSpec, source: &str, retries_used: u32, cache_dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(cache_dir)?;
    let path = source_path(spec, cache_dir);
    let meta = CacheMetadata::for_spec(spec, retries_used);
    let meta_bytes = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
    write_atomic(cache_dir, &metadata_path(spec, cache_dir), &meta_bytes)?;
    write_atomic(cache_dir, &path, source.as_bytes())?;
    Ok(path)
}

/// Returns the cached function for `spec`, if any.
pub fn lookup(spec: &TaskSpec, cache_dir: &Path) -> std::io::Result<Option<GeneratedFunction>> {
    let path = source_path(spec, cache_dir);
    let source = match std::fs::read_to_string(&path) {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e),
    };
    let retries_used = std::fs::read(metadata_path(spec, cache_dir))
        .ok()
        .and_then(|b| serde_json::from_slice::<CacheMetadata>(&b).ok())
        .map_or(0, |m| m.retries_used);
    Ok(Some(GeneratedFunction {
        source,
        entry: spec.name.clone(),
        language: spec.target_language,
        cache_path: path,
        retries_used,
    }))
}

/// Exclusive advisory lock on one cache key, released on drop.
#[derive(Debug)]
pub struct KeyLock {
    _file: File,
}

pub fn lock(spec: &TaskSpec, cache_dir: &Path) -> std::io::Result<KeyLock> {
    std::fs::create_dir_all(cache_dir)?;
    let file = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(cache_dir.join(format!(".{}.lock", stem(spec))))?;
    file.lock()?;
    Ok(KeyLock { _file: file })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::TargetLanguage;
    use crate::typeschema::TypeSchema;

    fn factorial() -> TaskSpec {
        TaskSpec::new(
            "calculateFactorial",
            "Calculate the factorial of {{n}}",
            Some(TypeSchema::Integer),
            Some(vec![("n".into(), TypeSchema::Integer)]),
        )
        .unwrap()
    }

    #[test]
    fn slug_rule() {
        let spec = factorial();
        assert_eq!(slug(&spec.template), "calculate_the_factorial_of__n_");
        let long = PromptTemplate::parse("Convert the JSON object {{o}} into a string, then more words").unwrap();
        let s = slug(&long);
        assert_eq!(s.chars().count(), 40);
        assert_eq!(s, "convert_the_json_object__o__into_a_strin");
    }

    #[test]
    fn file_name_shape() {
        let spec = factorial();
        let dir = Path::new("/cache");
        let path = source_path(&spec, dir);
        let name = path.file_name().unwrap().to_str().unwrap();
        assert!(name.starts_with("calculate_the_factorial_of__n__"));
        assert!(name.ends_with(".ts"));
        let hash = &name["calculate_the_factorial_of__n__".len()..name.len() - 3];
        assert_eq!(hash.len(), 8);
        assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn digest_stability_and_sensitivity() {
        let base = factorial();
        assert_eq!(digest(&base), digest(&factorial()));

        let mut other = factorial();
        other.return_schema = Some(TypeSchema::Float);
        assert_ne!(digest(&base), digest(&other));

        let mut other = factorial();
        other.param_schemas = Some(vec![("n".into(), TypeSchema::Float)]);
        assert_ne!(digest(&base), digest(&other));

        let mut other = factorial();
        other.target_language = TargetLanguage::Python;
        assert_ne!(digest(&base), digest(&other));
    }

    #[test]
    fn store_and_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let spec = factorial();
        assert!(lookup(&spec, dir.path()).unwrap().is_none());
        let path = store(&spec, "export function calculateFactorial() {}", 2, dir.path()).unwrap();
        assert!(path.exists());
        let hit = lookup(&spec, dir.path()).unwrap().unwrap();
        assert_eq!(hit.source, "export function calculateFactorial() {}");
        assert_eq!(hit.retries_used, 2);
        assert_eq!(hit.cache_path, path);
        let meta: CacheMetadata =
            serde_json::from_slice(&std::fs::read(metadata_path(&spec, dir.path())).unwrap()).unwrap();
        assert_eq!(meta.digest, digest(&spec));
        assert_eq!(meta.return_schema, "int");
    }

    #[test]
    fn lock_is_reentrant_across_sequential_guards() {
        let dir = tempfile::tempdir().unwrap();
        let spec = factorial();
        drop(lock(&spec, dir.path()).unwrap());
        let _again = lock(&spec, dir.path()).unwrap();
    }
}
