//! Meta-prompt rendering, chat-backed prompt synthesis, and strict parsing of
//! the three-field document-concept output.
//!
//! The caption, edit-instruction, and document-concept meta-prompts are fixed
//! texts used exactly as written; rendering only substitutes the
//! `{selected_theme}` / `{selected_font}` placeholders and the task name. The
//! compose meta-prompt is this project's own, since attribute composition has
//! no published prompt text.

use crate::attributes::AttributeBundle;
use crate::chat::{ChatBackend, ChatError, ChatRequest};
use crate::taxonomy::EditTaskSample;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// The five core document categories for the document pipeline.
pub const CORE_DOCUMENT_CATEGORIES: [&str; 5] =
    ["Slide", "Paper", "Document", "Infographic/Chart", "Poster"];

/// Caption meta-prompt (image-first pipeline), used verbatim.
pub const CAPTION_META_PROMPT: &str = "Please describe the main content of the image in one sentence. This sentence will be used as a prompt to regenerate the image, so it should clearly capture the key visual information. Only provide the sentence,no extra text.";

/// System prompt for edit-instruction synthesis, used verbatim.
pub const EDIT_INSTRUCTION_SYSTEM_PROMPT: &str = "You are an AI assistant that creates a single, concise, complete, and descriptive English sentence to be used as a prompt for image generation models. This sentence should beautifully capture the essence, mood, and key visual elements of the provided input image. If a 'Base Task' is provided, consider integrating it naturally into this single descriptive sentence. However, prioritizing the image's core visual appeal and the formation of a well-structured, impactful sentence is more important than rigidly following the task. If the task doesn't fit well or makes the sentence awkward or verbose, focus on crafting the best single descriptive sentence for the image itself. Output ONLY this single English sentence. No explanations, no preambles, no bullet points, no numbered lists. Just one sentence. For example, for an image of a misty forest (task: 'add creature'): 'A mystical deer steps softly through the sun-dappled, misty ancient forest.' Or if the task is awkward: 'Sunlight filters mysteriously through the tall trees in the quiet, misty forest.' For a portrait (task: 'change background to space'): 'Her serene gaze is complemented by a backdrop of swirling cosmic stardust.' Or without task: 'A soft light illuminates her thoughtful expression in this intimate portrait.'";

/// Document-concept meta-prompt template. `{selected_theme}` and
/// `{selected_font}` are substituted at render time.
pub const DOCUMENT_META_PROMPT_TEMPLATE: &str = r#"You are an expert document concept designer and text-to-image prompt generator. Your goal is to create concepts that are clear, professional, and highly appropriate for the intended use.

Your task is to perform the following steps IN ORDER:

STEP 1: Use the Given Theme and Choose a Core Document Category
   - Use the following theme: "{selected_theme}"
   - Choose ONE core document category that best fits this theme from the following list:
     Slide, Paper, Document, Infographic/Chart, Poster
   - Based on the chosen core category and theme, **conceive and clearly state a MORE SPECIFIC document type or application.**
     For example:
       [previous examples remain the same...]

STEP 2: Select an Appropriate Font Style and Visual Characteristics
   - Choose and incorporate this font style: "{selected_font}"
   - Based on the **Specific Document Type** from STEP 1 and the Theme, internally determine the most FITTING and EFFECTIVE visual style characteristics.
   - **Priority is on CLARITY, PROFESSIONALISM, and FUNCTIONALITY for the specific document type.**
   - Avoid overly ornate or unnecessarily complex styles unless the theme and specific type genuinely call for it (e.g., a historical document recreation).
   - **Minimize generic "parchment paper" or "old paper" styles for most modern professional contexts.**
   - The visual style should serve the content and the document's purpose.

STEP 3: Generate a Clear and Fitting Visual Template Prompt
   - Now, generate a single, compelling text-to-image prompt (in English) for creating a visual template.
   - This prompt MUST be based on the Theme AND the **Specific Document Type** (from STEP 1).
   - The prompt MUST reflect a visual style that is **highly appropriate, clear, and professional** for the specific document type and theme (informed by STEP 2).
   - The prompt should describe:
     - Overall aesthetic (e.g., "clean and modern," "formal and academic," "bold and clear," "data-focused and organized").
     - Layout and composition (e.g., "standard slide layout with title and content areas," "two-column academic paper layout," "grid-based infographic structure").
     - Color palette (e.g., "corporate blues and grays," "high-contrast for readability," "theme-appropriate accent colors").
     - Textures (if any: "smooth untextured background," "subtle professional texture like fine linen," "no distracting textures").
     - Placeholder elements and their style, suitable for the specific document type (e.g., "placeholders for a large title, speaker name, and event logo for a title slide").
   - Do NOT include any specific readable text in this visual template prompt itself.
   - The prompt should be a single, coherent sentence.

STEP 4: State Your Outputs Clearly
   - Provide your outputs in the following exact format, with each item on a new line:
     Visual Template Prompt: [The visual template prompt you generated in STEP 3]
     Conceived Theme: [The theme you conceived in STEP 1]
     Document Type: [The CORE DOCUMENT CATEGORY chosen in STEP 1, followed by the SPECIFIC document type/application you conceived in STEP 1, e.g., "Slide - Title Slide for a Tech Conference"]

Now, follow these steps carefully, focusing on CLARITY, PROFESSIONALISM, and APPROPRIATENESS for the document type, and generate a new set:"#;

/// System prompt for attribute composition (this project's own text; the
/// composition step has no published prompt).
pub const COMPOSE_SYSTEM_PROMPT: &str = "You are a prompt engineer for a text-to-image model. Compose the visual attributes you are given into one coherent, natural-language prompt describing a single scene. Include every object and honor every attribute. Respond with a single paragraph of plain text and nothing else.";

/// Single-line responses longer than this are rejected by the one-sentence
/// validators.
pub const MAX_SENTENCE_LEN: usize = 512;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("context does not match meta-prompt kind {expected:?}")]
    KindMismatch { expected: MetaPromptKind },
    #[error("bundle has no objects")]
    EmptyBundle,
    #[error("empty composition")]
    EmptyComposition,
    #[error("empty response")]
    EmptyResponse,
    #[error("expected one sentence, got {lines} lines")]
    NotOneSentence { lines: usize },
    #[error("response exceeds {MAX_SENTENCE_LEN} characters ({len})")]
    TooLong { len: usize },
    #[error("cannot read image {path}: {source}")]
    UnreadableImage {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Document(#[from] DocumentParseError),
}

/// The four meta-prompt kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaPromptKind {
    Compose,
    Caption,
    EditInstruction,
    DocumentConcept,
}

/// Structured context a meta-prompt is rendered from. Mock backends use this
/// to produce faithful deterministic responses; wire backends see only the
/// rendered text.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptContext {
    Compose { bundle: AttributeBundle },
    Caption { image: PathBuf },
    EditInstruction { task: EditTaskSample, image: PathBuf },
    DocumentConcept { theme: String, font: String },
}

impl PromptContext {
    pub fn kind(&self) -> MetaPromptKind {
        match self {
            PromptContext::Compose { .. } => MetaPromptKind::Compose,
            PromptContext::Caption { .. } => MetaPromptKind::Caption,
            PromptContext::EditInstruction { .. } => MetaPromptKind::EditInstruction,
            PromptContext::DocumentConcept { .. } => MetaPromptKind::DocumentConcept,
        }
    }

    pub fn attachment(&self) -> Option<&Path> {
        match self {
            PromptContext::Caption { image } => Some(image),
            PromptContext::EditInstruction { image, .. } => Some(image),
            _ => None,
        }
    }
}

/// Renders the (system, user) texts for a meta-prompt kind. Deterministic;
/// errors if the context does not match the kind.
pub fn render_meta_prompt(
    kind: MetaPromptKind,
    context: &PromptContext,
) -> Result<(String, String), PromptError> {
    if context.kind() != kind {
        return Err(PromptError::KindMismatch { expected: kind });
    }
    match context {
        PromptContext::Compose { bundle } => {
            if bundle.objects.is_empty() {
                return Err(PromptError::EmptyBundle);
            }
            let mut user = format!("Objects: {}", bundle.objects.join(", "));
            for (label, choice) in bundle.scene_choices() {
                if let Some(c) = choice {
                    user.push_str(&format!(
                        "\n{label} ({sub}): {phrase}",
                        sub = c.subdimension,
                        phrase = c.phrase
                    ));
                }
            }
            Ok((COMPOSE_SYSTEM_PROMPT.to_string(), user))
        }
        PromptContext::Caption { .. } => Ok((String::new(), CAPTION_META_PROMPT.to_string())),
        PromptContext::EditInstruction { task, .. } => Ok((
            EDIT_INSTRUCTION_SYSTEM_PROMPT.to_string(),
            format!(
                "Base Task: {category} - {subcategory}",
                category = task.category,
                subcategory = task.subcategory
            ),
        )),
        PromptContext::DocumentConcept { theme, font } => {
            let user = DOCUMENT_META_PROMPT_TEMPLATE
                .replace("{selected_theme}", theme)
                .replace("{selected_font}", font);
            Ok((String::new(), user))
        }
    }
}

fn invoke(backend: &dyn ChatBackend, context: PromptContext) -> Result<String, PromptError> {
    let kind = context.kind();
    let (system, user) = render_meta_prompt(kind, &context)?;
    let request = ChatRequest {
        kind,
        system,
        user,
        attachment: context.attachment().map(Path::to_path_buf),
        context,
    };
    let exchange = backend.complete(&request)?;
    Ok(exchange.response)
}

/// Composes an attribute bundle into a natural-language prompt via the chat
/// backend. The deterministic mock in template mode answers with
/// [`bundle_to_template_prompt`], which keeps offline runs fully reproducible.
///
/// Multi-line responses are normalized to a single paragraph.
pub fn compose_prompt(
    bundle: &AttributeBundle,
    backend: &dyn ChatBackend,
) -> Result<String, PromptError> {
    if bundle.objects.is_empty() {
        return Err(PromptError::EmptyBundle);
    }
    let response = invoke(
        backend,
        PromptContext::Compose {
            bundle: bundle.clone(),
        },
    )?;
    let paragraph = response
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    if paragraph.is_empty() {
        return Err(PromptError::EmptyComposition);
    }
    Ok(paragraph)
}

fn validate_one_sentence(response: &str) -> Result<String, PromptError> {
    let trimmed = response.trim();
    if trimmed.is_empty() {
        return Err(PromptError::EmptyResponse);
    }
    let lines = trimmed.lines().count();
    if lines != 1 {
        return Err(PromptError::NotOneSentence { lines });
    }
    if trimmed.chars().count() > MAX_SENTENCE_LEN {
        return Err(PromptError::TooLong {
            len: trimmed.chars().count(),
        });
    }
    Ok(trimmed.to_string())
}

fn check_readable(image: &Path) -> Result<(), PromptError> {
    std::fs::metadata(image).map(|_| ()).map_err(|source| {
        PromptError::UnreadableImage {
            path: image.display().to_string(),
            source,
        }
    })
}

/// Captions an image into a generation prompt (image-first pipeline).
/// The response must be a single line of at most [`MAX_SENTENCE_LEN`] chars.
pub fn caption_image(image: &Path, backend: &dyn ChatBackend) -> Result<String, PromptError> {
    check_readable(image)?;
    let response = invoke(
        backend,
        PromptContext::Caption {
            image: image.to_path_buf(),
        },
    )?;
    validate_one_sentence(&response)
}

/// Synthesizes a natural-language editing instruction for a sampled task and
/// source image. Single-line validation as for [`caption_image`]; the task's
/// category/subcategory travel with the record provenance.
pub fn synthesize_edit_instruction(
    task: &EditTaskSample,
    image: &Path,
    backend: &dyn ChatBackend,
) -> Result<String, PromptError> {
    check_readable(image)?;
    let response = invoke(
        backend,
        PromptContext::EditInstruction {
            task: task.clone(),
            image: image.to_path_buf(),
        },
    )?;
    validate_one_sentence(&response)
}

/// Requests and parses a document concept for a theme/font pair.
pub fn generate_document_concept(
    theme: &str,
    font: &str,
    backend: &dyn ChatBackend,
) -> Result<DocumentConcept, PromptError> {
    let response = invoke(
        backend,
        PromptContext::DocumentConcept {
            theme: theme.to_string(),
            font: font.to_string(),
        },
    )?;
    Ok(parse_document_output(&response)?)
}

/// A parsed document concept: the three labeled output fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentConcept {
    pub visual_template_prompt: String,
    pub conceived_theme: String,
    /// Core category plus the specific application, e.g.
    /// "Slide - Title Slide for a Tech Conference".
    pub document_type: String,
}

impl DocumentConcept {
    pub fn new(
        visual_template_prompt: impl Into<String>,
        conceived_theme: impl Into<String>,
        document_type: impl Into<String>,
    ) -> Result<Self, DocumentParseError> {
        let concept = Self {
            visual_template_prompt: visual_template_prompt.into(),
            conceived_theme: conceived_theme.into(),
            document_type: document_type.into(),
        };
        if concept.visual_template_prompt.is_empty() {
            return Err(DocumentParseError::EmptyValue {
                label: LABELS[0],
                line: 1,
            });
        }
        if concept.conceived_theme.is_empty() {
            return Err(DocumentParseError::EmptyValue {
                label: LABELS[1],
                line: 2,
            });
        }
        if concept.document_type.is_empty() {
            return Err(DocumentParseError::EmptyValue {
                label: LABELS[2],
                line: 3,
            });
        }
        check_core_category(&concept.document_type, 3)?;
        Ok(concept)
    }

    /// Formats the concept in the exact three-line output shape; parsing the
    /// result recovers an equal concept.
    pub fn format(&self) -> String {
        format!(
            "Visual Template Prompt: {}\nConceived Theme: {}\nDocument Type: {}",
            self.visual_template_prompt, self.conceived_theme, self.document_type
        )
    }
}

const LABELS: [&str; 3] = ["Visual Template Prompt", "Conceived Theme", "Document Type"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocumentParseError {
    #[error("missing label: {label}")]
    MissingLabel { label: &'static str },
    #[error("out of order at line {line}: found \"{found}\", expected \"{expected}\"")]
    OutOfOrder {
        line: usize,
        found: &'static str,
        expected: &'static str,
    },
    #[error("unlabeled content at line {line}: expected \"{expected}:\"")]
    UnlabeledLine {
        line: usize,
        expected: &'static str,
    },
    #[error("empty value for {label} at line {line}")]
    EmptyValue { label: &'static str, line: usize },
    #[error("trailing content at line {line}")]
    TrailingContent { line: usize },
    #[error("duplicate label {label} at line {line}")]
    DuplicateLabel { label: &'static str, line: usize },
    #[error("unknown core document category at line {line}: \"{value}\"")]
    UnknownCategory { line: usize, value: String },
}

/// Parses the three labeled output lines in strict order:
/// `Visual Template Prompt:`, `Conceived Theme:`, `Document Type:`.
///
/// Labels are case-sensitive and must start their line; values are trimmed
/// and must be nonempty; blank lines are ignored; anything else is an error
/// naming the first violated rule and its line number. Never panics on
/// arbitrary input.
pub fn parse_document_output(response: &str) -> Result<DocumentConcept, DocumentParseError> {
    parse_document_output_with(response, false)
}

/// Lenient variant: accepts the three labels in any order (still exactly once
/// each, still strict about values).
pub fn parse_document_output_lenient(
    response: &str,
) -> Result<DocumentConcept, DocumentParseError> {
    parse_document_output_with(response, true)
}

fn parse_document_output_with(
    response: &str,
    lenient: bool,
) -> Result<DocumentConcept, DocumentParseError> {
    let mut values: [Option<String>; 3] = [None, None, None];
    let mut category_line = 0usize;
    let mut next_expected = 0usize;

    for (idx, raw) in response.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let Some((label_idx, rest)) = match_label(line) else {
            let expected = LABELS[next_expected.min(2)];
            return Err(DocumentParseError::UnlabeledLine {
                line: line_no,
                expected,
            });
        };
        if values[label_idx].is_some() {
            return Err(DocumentParseError::DuplicateLabel {
                label: LABELS[label_idx],
                line: line_no,
            });
        }
        if !lenient && label_idx != next_expected {
            return Err(DocumentParseError::OutOfOrder {
                line: line_no,
                found: LABELS[label_idx],
                expected: LABELS[next_expected],
            });
        }
        let value = rest.trim();
        if value.is_empty() {
            return Err(DocumentParseError::EmptyValue {
                label: LABELS[label_idx],
                line: line_no,
            });
        }
        if label_idx == 2 {
            category_line = line_no;
        }
        values[label_idx] = Some(value.to_string());
        if !lenient {
            next_expected += 1;
            if next_expected == 3 {
                // Anything non-blank after the third label breaks the format.
                for (jdx, tail) in response.lines().enumerate().skip(idx + 1) {
                    if !tail.trim().is_empty() {
                        return Err(DocumentParseError::TrailingContent { line: jdx + 1 });
                    }
                }
                break;
            }
        }
    }

    let [vtp, theme, dtype] = values;
    let vtp = vtp.ok_or(DocumentParseError::MissingLabel { label: LABELS[0] })?;
    let theme = theme.ok_or(DocumentParseError::MissingLabel { label: LABELS[1] })?;
    let dtype = dtype.ok_or(DocumentParseError::MissingLabel { label: LABELS[2] })?;
    check_core_category(&dtype, category_line)?;
    Ok(DocumentConcept {
        visual_template_prompt: vtp,
        conceived_theme: theme,
        document_type: dtype,
    })
}

fn match_label(line: &str) -> Option<(usize, &str)> {
    for (i, label) in LABELS.iter().enumerate() {
        if let Some(rest) = line.strip_prefix(label) {
            if let Some(rest) = rest.strip_prefix(':') {
                return Some((i, rest));
            }
        }
    }
    None
}

fn check_core_category(document_type: &str, line: usize) -> Result<(), DocumentParseError> {
    for category in CORE_DOCUMENT_CATEGORIES {
        if let Some(rest) = document_type.strip_prefix(category) {
            // Exact category, or category followed by a separator.
            if rest.is_empty() || rest.starts_with(' ') || rest.starts_with('-') {
                return Ok(());
            }
        }
    }
    Err(DocumentParseError::UnknownCategory {
        line,
        value: document_type.to_string(),
    })
}
