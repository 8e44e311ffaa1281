use serde::{Deserialize, Serialize};

use super::GenError;
use crate::matrix::ElementType;

/// Shape of one offloaded linear operation's weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: ElementType,
}

impl OpShape {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, dtype: ElementType) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            dtype,
        }
    }

    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn dense_bytes(&self) -> usize {
        self.elements() * self.dtype.bytes()
    }

    pub fn with_dtype(&self, dtype: ElementType) -> Self {
        Self {
            dtype,
            ..self.clone()
        }
    }
}

/// Per-layer catalog of offloaded operations for a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_name: String,
    pub num_layers: usize,
    pub ops_per_layer: Vec<OpShape>,
}

impl ModelSpec {
    pub fn bytes_per_layer(&self) -> usize {
        self.ops_per_layer.iter().map(OpShape::dense_bytes).sum()
    }

    pub fn elements_per_layer(&self) -> usize {
        self.ops_per_layer.iter().map(OpShape::elements).sum()
    }

    pub fn total_bytes(&self) -> usize {
        self.bytes_per_layer() * self.num_layers
    }

    pub fn op(&self, name: &str) -> Option<&OpShape> {
        self.ops_per_layer.iter().find(|o| o.name == name)
    }

    /// The same model with every operation stored as `dtype`.
    pub fn with_dtype(&self, dtype: ElementType) -> Self {
        Self {
            ops_per_layer: self
                .ops_per_layer
                .iter()
                .map(|o| o.with_dtype(dtype))
                .collect(),
            ..self.clone()
        }
    }
}

pub const OPT_66B: &str = "opt-66b";
pub const LLAMA2_70B: &str = "llama2-70b";

fn f16_op(name: &str, rows: usize, cols: usize) -> OpShape {
    OpShape::new(name, rows, cols, ElementType::F16)
}

pub fn model_catalog(name: &str) -> Result<ModelSpec, GenError> {
    match name.to_ascii_lowercase().as_str() {
        OPT_66B => {
            let h = 9216;
            let ffn = 36864;
            Ok(ModelSpec {
                model_name: OPT_66B.into(),
                num_layers: 64,
                ops_per_layer: vec![
                    f16_op("attn.q_proj", h, h),
                    f16_op("attn.k_proj", h, h),
                    f16_op("attn.v_proj", h, h),
                    f16_op("attn.out_proj", h, h),
                    f16_op("fc1", h, ffn),
                    f16_op("fc2", ffn, h),
                ],
            })
        }
        LLAMA2_70B => {
            let h = 8192;
            let kv = 1024;
            let ffn = 28672;
            Ok(ModelSpec {
                model_name: LLAMA2_70B.into(),
                num_layers: 80,
                ops_per_layer: vec![
                    f16_op("attn.q_proj", h, h),
                    f16_op("attn.k_proj", kv, h),
                    f16_op("attn.v_proj", kv, h),
                    f16_op("attn.o_proj", h, h),
                    f16_op("mlp.gate_proj", h, ffn),
                    f16_op("mlp.up_proj", h, ffn),
                    f16_op("mlp.down_proj", ffn, h),
                ],
            })
        }
        _ => Err(GenError::UnknownModel(name.to_string())),
    }
}
