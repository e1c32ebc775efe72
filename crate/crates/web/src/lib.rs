//! Browser bindings: build a cloud, preview its UVGS map and compare renders
//! of the original against the reconstruction.

pub mod session;

use wasm_bindgen::prelude::*;

use session::{arrangement, Session};

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
pub struct Comparison {
    size: u32,
    original: Vec<u8>,
    reconstructed: Vec<u8>,
    psnr: f64,
}

#[wasm_bindgen]
impl Comparison {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> u32 {
        self.size
    }

    /// RGBA pixels of the original cloud.
    pub fn original(&self) -> Vec<u8> {
        self.original.clone()
    }

    /// RGBA pixels of the reconstruction.
    pub fn reconstructed(&self) -> Vec<u8> {
        self.reconstructed.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn psnr(&self) -> f64 {
        self.psnr
    }
}

#[wasm_bindgen]
impl Demo {
    /// A synthetic cloud; `kind` is fibonacci, ball, shell or rays.
    #[wasm_bindgen(constructor)]
    pub fn new(kind: &str, count: u32, seed: u32, width: u32, height: u32) -> Result<Demo, JsError> {
        let arrangement = arrangement(kind, width, height).map_err(js)?;
        Ok(Demo {
            session: Session::synthetic(count as usize, arrangement, u64::from(seed)),
        })
    }

    #[wasm_bindgen(js_name = fromPly)]
    pub fn from_ply(bytes: &[u8]) -> Result<Demo, JsError> {
        Ok(Demo {
            session: Session::from_ply(bytes).map_err(js)?,
        })
    }

    #[wasm_bindgen(getter, js_name = cloudLen)]
    pub fn cloud_len(&self) -> u32 {
        self.session.cloud_len() as u32
    }

    #[wasm_bindgen(getter, js_name = reconstructedLen)]
    pub fn reconstructed_len(&self) -> u32 {
        self.session.reconstructed_len() as u32
    }

    #[wasm_bindgen(getter)]
    pub fn occupied(&self) -> u32 {
        self.session.map().occupied_count() as u32
    }

    #[wasm_bindgen(getter)]
    pub fn capacity(&self) -> f64 {
        self.session.map().dims().capacity() as f64
    }

    pub fn remap(&mut self, width: u32, height: u32, layers: u32, threshold: f32) -> Result<(), JsError> {
        self.session.remap(width, height, layers, threshold).map_err(js)
    }

    /// RGBA preview of layer 0 of an attribute group.
    pub fn preview(&self, group: &str) -> Result<Vec<u8>, JsError> {
        self.session.preview_rgba(group).map_err(js)
    }

    pub fn compare(&self, view: u32, cameras: u32, size: u32) -> Result<Comparison, JsError> {
        let c = self.session.compare(view, cameras, size).map_err(js)?;
        Ok(Comparison {
            size: c.size,
            original: c.original,
            reconstructed: c.reconstructed,
            psnr: c.psnr,
        })
    }

    /// The current map as UVGS1 bytes.
    pub fn container(&self, sparse: bool, normalize: bool) -> Result<Vec<u8>, JsError> {
        self.session.container(sparse, normalize).map_err(js)
    }
}
