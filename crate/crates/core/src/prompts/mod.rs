//! Versioned, role-formatted prompt templates with metadata, validated
//! variable substitution, and content fingerprinting.
//!
//! Banks are immutable after load: editing a prompt means writing a new
//! version on disk, so a fingerprint never refers to two contents.

mod defaults;

pub use defaults::default_bank;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sha256_hex;

/// Separators for the canonical fingerprint serialization:
/// messages are `role 0x1F body`, fields are joined by 0x1E.
const FIELD_SEP: char = '\u{1e}';
const ROLE_SEP: char = '\u{1f}';

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{file}: {detail}")]
    SchemaError { file: String, detail: String },
    #[error("template `{template}`: placeholder `{{{name}}}` is not a declared variable")]
    UndeclaredPlaceholder { template: String, name: String },
    #[error("duplicate template `{id}` version {version}")]
    DuplicateVersion { id: String, version: u32 },
    #[error("unknown template `{id}`")]
    UnknownTemplate { id: String },
    #[error("unknown version {version} of template `{id}`")]
    UnknownVersion { id: String, version: u32 },
    #[error("missing variable `{name}`")]
    MissingVariable { name: String },
    #[error("template `{template}`: {detail}")]
    MalformedBody { template: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Chat message role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One role-tagged message body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub body: String,
}

/// A versioned prompt template with `{variable}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub version: u32,
    pub method: String,
    pub messages: Vec<Message>,
    pub variables: BTreeSet<String>,
    pub metadata: BTreeMap<String, String>,
}

/// A fully substituted prompt, ready for a chat endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub messages: Vec<Message>,
    pub template_id: String,
    pub template_version: u32,
    /// Hex digest over (id, version, substituted messages).
    pub fingerprint: String,
    /// Variables supplied but not declared; ignored during substitution.
    pub extra_variables: Vec<String>,
}

/// Parsed body segment: literal text or a placeholder to substitute.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

fn valid_placeholder_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(first) if first.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Splits a body into literal and placeholder segments.
///
/// `{{` and `}}` are escapes for literal braces; any other `{` must open a
/// `{name}` placeholder with `name` matching `[a-z][a-z0-9_]*`.
fn scan_segments(body: &str) -> Result<Vec<Segment>, String> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut chars = body.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '{' => {
                if chars.peek() == Some(&'{') {
                    chars.next();
                    literal.push('{');
                    continue;
                }
                let mut name = String::new();
                let mut closed = false;
                for inner in chars.by_ref() {
                    if inner == '}' {
                        closed = true;
                        break;
                    }
                    name.push(inner);
                }
                if !closed {
                    return Err(format!("unclosed placeholder `{{{name}`"));
                }
                if !valid_placeholder_name(&name) {
                    return Err(format!(
                        "invalid placeholder name `{{{name}}}` (expected [a-z][a-z0-9_]*)"
                    ));
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Placeholder(name));
            }
            '}' => {
                if chars.peek() == Some(&'}') {
                    chars.next();
                    literal.push('}');
                } else {
                    return Err("unescaped `}` outside a placeholder (use `}}`)".into());
                }
            }
            other => literal.push(other),
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

fn canonical_fingerprint(id: &str, version: u32, messages: &[Message]) -> String {
    let mut canonical = String::new();
    canonical.push_str(id);
    canonical.push(FIELD_SEP);
    canonical.push_str(&version.to_string());
    for message in messages {
        canonical.push(FIELD_SEP);
        canonical.push_str(message.role.as_str());
        canonical.push(ROLE_SEP);
        canonical.push_str(&message.body);
    }
    sha256_hex(canonical.as_bytes())
}

impl PromptTemplate {
    /// Template-level fingerprint over the unsubstituted bodies.
    pub fn fingerprint(&self) -> String {
        canonical_fingerprint(&self.id, self.version, &self.messages)
    }

    /// Checks the template invariants, returning the first violation.
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(PromptError::MalformedBody {
                template: self.id.clone(),
                detail: "template id must be non-empty and contain no whitespace".into(),
            });
        }
        if self.version == 0 {
            return Err(PromptError::MalformedBody {
                template: self.id.clone(),
                detail: "version must be a positive integer".into(),
            });
        }
        if self.messages.is_empty() {
            return Err(PromptError::MalformedBody {
                template: self.id.clone(),
                detail: "messages must be non-empty".into(),
            });
        }
        for name in &self.variables {
            if !valid_placeholder_name(name) {
                return Err(PromptError::MalformedBody {
                    template: self.id.clone(),
                    detail: format!("invalid variable name `{name}`"),
                });
            }
        }
        let mut used = BTreeSet::new();
        for message in &self.messages {
            let segments =
                scan_segments(&message.body).map_err(|detail| PromptError::MalformedBody {
                    template: self.id.clone(),
                    detail,
                })?;
            for segment in segments {
                if let Segment::Placeholder(name) = segment {
                    if !self.variables.contains(&name) {
                        return Err(PromptError::UndeclaredPlaceholder {
                            template: self.id.clone(),
                            name,
                        });
                    }
                    used.insert(name);
                }
            }
        }
        for name in &self.variables {
            if !used.contains(name) {
                return Err(PromptError::MalformedBody {
                    template: self.id.clone(),
                    detail: format!("declared variable `{name}` never occurs in any body"),
                });
            }
        }
        Ok(())
    }

    /// Substitutes `vars` into the template.
    ///
    /// Every declared variable must be covered; extra entries are ignored but
    /// recorded on the rendered prompt.
    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<RenderedPrompt, PromptError> {
        for name in &self.variables {
            if !vars.contains_key(name) {
                return Err(PromptError::MissingVariable { name: name.clone() });
            }
        }
        let mut messages = Vec::with_capacity(self.messages.len());
        for message in &self.messages {
            let segments =
                scan_segments(&message.body).map_err(|detail| PromptError::MalformedBody {
                    template: self.id.clone(),
                    detail,
                })?;
            let mut body = String::with_capacity(message.body.len());
            for segment in segments {
                match segment {
                    Segment::Literal(text) => body.push_str(&text),
                    Segment::Placeholder(name) => {
                        if !self.variables.contains(&name) {
                            return Err(PromptError::UndeclaredPlaceholder {
                                template: self.id.clone(),
                                name,
                            });
                        }
                        body.push_str(&vars[&name]);
                    }
                }
            }
            messages.push(Message {
                role: message.role,
                body,
            });
        }
        let fingerprint = canonical_fingerprint(&self.id, self.version, &messages);
        let extra_variables = vars
            .keys()
            .filter(|key| !self.variables.contains(*key))
            .cloned()
            .collect();
        Ok(RenderedPrompt {
            messages,
            template_id: self.id.clone(),
            template_version: self.version,
            fingerprint,
            extra_variables,
        })
    }
}

/// Convenience for building the `vars` map passed to [`PromptTemplate::render`].
pub fn vars(entries: &[(&str, &str)]) -> BTreeMap<String, String> {
    entries
        .iter()
        .map(|(key, value)| ((*key).to_owned(), (*value).to_owned()))
        .collect()
}

/// One row of a bank listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSummary {
    pub id: String,
    pub version: u32,
    pub method: String,
    pub description: String,
}

/// An immutable collection of validated prompt templates.
#[derive(Debug, Default)]
pub struct PromptBank {
    templates: BTreeMap<String, BTreeMap<u32, Arc<PromptTemplate>>>,
}

impl PromptBank {
    /// Builds a bank from templates, validating each and rejecting
    /// duplicate (id, version) pairs.
    pub fn from_templates(
        templates: impl IntoIterator<Item = PromptTemplate>,
    ) -> Result<Self, PromptError> {
        let mut bank = PromptBank::default();
        for template in templates {
            template.validate()?;
            let versions = bank.templates.entry(template.id.clone()).or_default();
            if versions.contains_key(&template.version) {
                return Err(PromptError::DuplicateVersion {
                    id: template.id,
                    version: template.version,
                });
            }
            versions.insert(template.version, Arc::new(template));
        }
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.templates.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Resolves a template; `version: None` picks the highest version.
    pub fn get(&self, id: &str, version: Option<u32>) -> Result<Arc<PromptTemplate>, PromptError> {
        let versions = self
            .templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate { id: id.to_owned() })?;
        match version {
            Some(requested) => versions
                .get(&requested)
                .cloned()
                .ok_or(PromptError::UnknownVersion {
                    id: id.to_owned(),
                    version: requested,
                }),
            None => Ok(versions
                .values()
                .next_back()
                .cloned()
                .expect("bank never stores an id with zero versions")),
        }
    }

    /// Lists templates sorted by (id, version), optionally filtered by method.
    pub fn list(&self, method_filter: Option<&str>) -> Vec<TemplateSummary> {
        let mut rows = Vec::new();
        for versions in self.templates.values() {
            for template in versions.values() {
                if let Some(filter) = method_filter {
                    if template.method != filter {
                        continue;
                    }
                }
                rows.push(TemplateSummary {
                    id: template.id.clone(),
                    version: template.version,
                    method: template.method.clone(),
                    description: template
                        .metadata
                        .get("description")
                        .cloned()
                        .unwrap_or_default(),
                });
            }
        }
        rows
    }
}

#[derive(Deserialize)]
struct MessageDoc {
    role: String,
    body: String,
}

#[derive(Deserialize)]
struct TemplateDoc {
    id: String,
    version: u32,
    method: String,
    #[serde(default)]
    variables: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    messages: Vec<MessageDoc>,
}

fn template_from_doc(file: &str, doc: TemplateDoc) -> Result<PromptTemplate, PromptError> {
    let mut messages = Vec::with_capacity(doc.messages.len());
    for message in doc.messages {
        let role = match message.role.as_str() {
            "system" => Role::System,
            "user" => Role::User,
            "assistant" => Role::Assistant,
            other => {
                return Err(PromptError::SchemaError {
                    file: file.to_owned(),
                    detail: format!(
                        "template `{}`: bad role `{other}` (expected system/user/assistant)",
                        doc.id
                    ),
                })
            }
        };
        messages.push(Message {
            role,
            body: message.body,
        });
    }
    if !doc.metadata.contains_key("description") {
        return Err(PromptError::SchemaError {
            file: file.to_owned(),
            detail: format!("template `{}`: metadata.description is required", doc.id),
        });
    }
    Ok(PromptTemplate {
        id: doc.id,
        version: doc.version,
        method: doc.method,
        messages,
        variables: doc.variables.into_iter().collect(),
        metadata: doc.metadata,
    })
}

/// Parses every YAML document in `content` into templates.
fn parse_templates(file: &str, content: &str) -> Result<Vec<PromptTemplate>, PromptError> {
    let mut templates = Vec::new();
    for document in serde_yaml::Deserializer::from_str(content) {
        let value =
            serde_yaml::Value::deserialize(document).map_err(|err| PromptError::SchemaError {
                file: file.to_owned(),
                detail: err.to_string(),
            })?;
        if value.is_null() {
            continue;
        }
        let doc: TemplateDoc =
            serde_yaml::from_value(value).map_err(|err| PromptError::SchemaError {
                file: file.to_owned(),
                detail: err.to_string(),
            })?;
        templates.push(template_from_doc(file, doc)?);
    }
    Ok(templates)
}

fn map_load_error(file: &str, err: PromptError) -> PromptError {
    // Attach the file name to validation errors that do not carry one.
    match err {
        PromptError::MalformedBody { template, detail } => PromptError::SchemaError {
            file: file.to_owned(),
            detail: format!("template `{template}`: {detail}"),
        },
        other => other,
    }
}

/// Loads a bank from a single YAML file or a directory scanned recursively
/// for `*.yaml`/`*.yml`. Templates are validated at load time.
pub fn load_bank(path: impl AsRef<Path>) -> Result<PromptBank, PromptError> {
    let path = path.as_ref();
    let metadata = std::fs::metadata(path).map_err(|source| PromptError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let mut files = Vec::new();
    if metadata.is_dir() {
        for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
            let entry = entry.map_err(|err| PromptError::Io {
                path: path.display().to_string(),
                source: err.into(),
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            match entry.path().extension().and_then(|ext| ext.to_str()) {
                Some("yaml") | Some("yml") => files.push(entry.into_path()),
                _ => {}
            }
        }
    } else {
        files.push(path.to_path_buf());
    }

    let mut bank = PromptBank::default();
    for file in files {
        let name = file.display().to_string();
        let content = std::fs::read_to_string(&file).map_err(|source| PromptError::Io {
            path: name.clone(),
            source,
        })?;
        for template in parse_templates(&name, &content)? {
            template
                .validate()
                .map_err(|err| map_load_error(&name, err))?;
            let versions = bank.templates.entry(template.id.clone()).or_default();
            if versions.contains_key(&template.version) {
                return Err(PromptError::DuplicateVersion {
                    id: template.id,
                    version: template.version,
                });
            }
            versions.insert(template.version, Arc::new(template));
        }
    }
    Ok(bank)
}

/// Test-visible loader used for the embedded default bank.
pub(crate) fn bank_from_named_strings(
    sources: &[(&str, &str)],
) -> Result<PromptBank, PromptError> {
    let mut templates = Vec::new();
    for (name, content) in sources {
        templates.extend(parse_templates(name, content)?);
    }
    PromptBank::from_templates(templates)
}
