//! Image-generation backends: a deterministic PNG mock for offline runs and
//! an HTTP adapter.
//!
//! The mock emits a 64x64 RGB PNG whose fill color derives from the SHA-256
//! of the prompt (or of source bytes + instruction for edits). The first
//! pixel row additionally encodes the full 32-byte digest, so distinct
//! prompts are guaranteed to produce byte-distinct images; a 24-bit fill
//! color alone would collide by birthday statistics within a few hundred
//! records.

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, Rgb, RgbImage};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Side length of mock images.
pub const MOCK_IMAGE_SIZE: u32 = 64;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("png encoding failed: {0}")]
    Encode(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned status {code}: {message}")]
    Status { code: u16, message: String },
    #[error("response JSON has no image at pointer {pointer}")]
    MissingResponseField { pointer: String },
    #[error("response image is not valid base64: {0}")]
    Base64(String),
    #[error("environment variable {} is not set", crate::chat::API_KEY_ENV)]
    MissingApiKey,
}

impl ImageError {
    pub fn retryable(&self) -> bool {
        match self {
            ImageError::Transport(_) => true,
            ImageError::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

/// An image generation/editing backend. Must tolerate concurrent calls.
pub trait ImageBackend: Send + Sync {
    fn id(&self) -> &str;
    /// Generates a PNG for a text prompt.
    fn generate(&self, prompt: &str) -> Result<Vec<u8>, ImageError>;
    /// Applies an editing instruction to source PNG bytes, returning the
    /// edited PNG.
    fn edit(&self, source_png: &[u8], instruction: &str) -> Result<Vec<u8>, ImageError>;
}

/// Deterministic offline image backend.
pub struct MockImageBackend {
    id: String,
}

impl MockImageBackend {
    pub fn new() -> Self {
        Self {
            id: "mock-image".into(),
        }
    }

    fn png_from_digest(digest: [u8; 32]) -> Result<Vec<u8>, ImageError> {
        let mut img = RgbImage::from_pixel(
            MOCK_IMAGE_SIZE,
            MOCK_IMAGE_SIZE,
            Rgb([digest[0], digest[1], digest[2]]),
        );
        // Row 0 carries the full digest, three bytes per pixel.
        for (i, chunk) in digest.chunks(3).enumerate() {
            let mut px = [0u8; 3];
            px[..chunk.len()].copy_from_slice(chunk);
            img.put_pixel(i as u32, 0, Rgb(px));
        }
        let mut buf = Vec::new();
        PngEncoder::new(&mut buf)
            .write_image(
                img.as_raw(),
                MOCK_IMAGE_SIZE,
                MOCK_IMAGE_SIZE,
                ExtendedColorType::Rgb8,
            )
            .map_err(|e| ImageError::Encode(e.to_string()))?;
        Ok(buf)
    }
}

impl Default for MockImageBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ImageBackend for MockImageBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str) -> Result<Vec<u8>, ImageError> {
        Self::png_from_digest(Sha256::digest(prompt.as_bytes()).into())
    }

    fn edit(&self, source_png: &[u8], instruction: &str) -> Result<Vec<u8>, ImageError> {
        let mut hasher = Sha256::new();
        hasher.update(source_png);
        hasher.update([0]);
        hasher.update(instruction.as_bytes());
        Self::png_from_digest(hasher.finalize().into())
    }
}

/// Default JSON-pointer path to the base64 image in HTTP responses.
pub const DEFAULT_IMAGE_POINTER: &str = "/data/0/b64_json";

/// Image backend speaking an OpenAI-images-style HTTP contract: POST
/// `{prompt}` (or `{prompt, image}` for edits, image base64-encoded) and read
/// a base64 PNG from the configured JSON pointer.
pub struct HttpImageBackend {
    id: String,
    endpoint: String,
    response_pointer: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpImageBackend {
    pub fn new(endpoint: &str, response_pointer: Option<&str>) -> Result<Self, ImageError> {
        let api_key =
            std::env::var(crate::chat::API_KEY_ENV).map_err(|_| ImageError::MissingApiKey)?;
        Ok(Self {
            id: format!("http:{endpoint}"),
            endpoint: endpoint.to_string(),
            response_pointer: response_pointer.unwrap_or(DEFAULT_IMAGE_POINTER).to_string(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(300))
                .build()
                .map_err(|e| ImageError::Transport(e.to_string()))?,
        })
    }

    fn post(&self, body: serde_json::Value) -> Result<Vec<u8>, ImageError> {
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ImageError::Transport(e.to_string()))?;
        let code = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| ImageError::Transport(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(ImageError::Status {
                code,
                message: text.chars().take(200).collect(),
            });
        }
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ImageError::Transport(e.to_string()))?;
        let b64 = json
            .pointer(&self.response_pointer)
            .and_then(|v| v.as_str())
            .ok_or_else(|| ImageError::MissingResponseField {
                pointer: self.response_pointer.clone(),
            })?;
        use base64::Engine as _;
        base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| ImageError::Base64(e.to_string()))
    }
}

impl ImageBackend for HttpImageBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str) -> Result<Vec<u8>, ImageError> {
        self.post(serde_json::json!({"prompt": prompt}))
    }

    fn edit(&self, source_png: &[u8], instruction: &str) -> Result<Vec<u8>, ImageError> {
        use base64::Engine as _;
        self.post(serde_json::json!({
            "prompt": instruction,
            "image": base64::engine::general_purpose::STANDARD.encode(source_png),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_png_is_valid_and_deterministic() {
        let backend = MockImageBackend::new();
        let a = backend.generate("a goldfish in a library").unwrap();
        let b = backend.generate("a goldfish in a library").unwrap();
        assert_eq!(a, b);
        let img = image::load_from_memory(&a).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (MOCK_IMAGE_SIZE, MOCK_IMAGE_SIZE));
        // Fill color matches the prompt digest.
        let digest = Sha256::digest("a goldfish in a library".as_bytes());
        assert_eq!(
            img.get_pixel(10, 10),
            &Rgb([digest[0], digest[1], digest[2]])
        );
    }

    #[test]
    fn distinct_prompts_distinct_bytes() {
        let backend = MockImageBackend::new();
        let a = backend.generate("prompt one").unwrap();
        let b = backend.generate("prompt two").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn edit_depends_on_source_and_instruction() {
        let backend = MockImageBackend::new();
        let src1 = backend.generate("source").unwrap();
        let src2 = backend.generate("other source").unwrap();
        let e1 = backend.edit(&src1, "make it night").unwrap();
        let e2 = backend.edit(&src1, "make it day").unwrap();
        let e3 = backend.edit(&src2, "make it night").unwrap();
        assert_ne!(e1, e2);
        assert_ne!(e1, e3);
        assert_eq!(e1, backend.edit(&src1, "make it night").unwrap());
    }
}
