//! Python bindings for `actnet`.

#[pyo3::pymodule]
mod actnet_py {
    use std::collections::HashMap;

    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;

    use actnet::activations::{act_backward, act_forward, ActivationKind};
    use actnet::bench::selu_demo::{DEMO_LAYERS, DEMO_SAMPLES, DEMO_WIDTH};
    use actnet::bench::{run_gradcheck, run_suite_file, selu_demo as demo, GradcheckTarget, Perturbation, RunOptions};
    use actnet::dataio::{self, LabeledDataset, SpectrogramParams};
    use actnet::models::{self, build_mlp, build_vgg9, ModelConfig};
    use actnet::Mode;

    fn err(e: actnet::Error) -> PyErr {
        match e {
            actnet::Error::Io(_) | actnet::Error::Wav { .. } | actnet::Error::Csv(_) => {
                PyRuntimeError::new_err(e.to_string())
            }
            _ => PyValueError::new_err(e.to_string()),
        }
    }

    fn kind(name: &str) -> PyResult<ActivationKind> {
        name.parse().map_err(err)
    }

    /// Dense row-major `f64` tensor.
    #[pyclass(module = "actnet_py", skip_from_py_object)]
    #[derive(Clone)]
    pub struct Tensor {
        inner: actnet::Tensor,
    }

    #[pymethods]
    impl Tensor {
        #[new]
        fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
            Ok(Tensor { inner: actnet::Tensor::new(&shape, data).map_err(err)? })
        }

        #[getter]
        fn shape(&self) -> Vec<usize> {
            self.inner.shape().to_vec()
        }

        #[getter]
        fn data(&self) -> Vec<f64> {
            self.inner.data().to_vec()
        }

        fn __len__(&self) -> usize {
            self.inner.shape()[0]
        }

        fn __repr__(&self) -> String {
            format!("Tensor(shape={:?})", self.inner.shape())
        }
    }

    #[pyfunction]
    fn activation_names() -> Vec<&'static str> {
        ActivationKind::ALL.iter().map(|k| k.name()).collect()
    }

    #[pyfunction]
    fn activation(name: &str, x: f64) -> PyResult<f64> {
        act_forward(kind(name)?, x).map_err(err)
    }

    #[pyfunction]
    fn activation_derivative(name: &str, x: f64) -> PyResult<f64> {
        act_backward(kind(name)?, x).map_err(err)
    }

    #[pyfunction]
    fn softmax(z: Vec<f64>) -> PyResult<Vec<f64>> {
        actnet::activations::softmax(&z).map_err(err)
    }

    #[pyfunction]
    fn matmul(a: PyRef<'_, Tensor>, b: PyRef<'_, Tensor>) -> PyResult<Tensor> {
        Ok(Tensor { inner: actnet::tensor::matmul(&a.inner, &b.inner).map_err(err)? })
    }

    #[pyfunction]
    fn conv2d_same(input: PyRef<'_, Tensor>, kernels: PyRef<'_, Tensor>, bias: PyRef<'_, Tensor>) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: actnet::tensor::conv2d_same(&input.inner, &kernels.inner, &bias.inner).map_err(err)?,
        })
    }

    fn dataset(x: &Tensor, labels: Vec<usize>, classes: usize) -> PyResult<LabeledDataset> {
        LabeledDataset::new(x.inner.clone(), labels, classes).map_err(err)
    }

    /// A trainable network (`Model.mlp(...)` or `Model.vgg9(...)`).
    #[pyclass(module = "actnet_py")]
    pub struct Model {
        inner: models::Model,
    }

    #[pymethods]
    impl Model {
        #[staticmethod]
        #[pyo3(signature = (widths, activation = "relu", seed = 0))]
        fn mlp(widths: Vec<usize>, activation: &str, seed: u64) -> PyResult<Self> {
            let cfg = ModelConfig::mlp(&widths, kind(activation)?);
            Ok(Model { inner: build_mlp(&cfg, seed).map_err(err)? })
        }

        #[staticmethod]
        #[pyo3(signature = (activation = "relu", bn = true, dropout = true, seed = 0, input_hw = (128, 128), classes = 10))]
        fn vgg9(activation: &str, bn: bool, dropout: bool, seed: u64, input_hw: (usize, usize), classes: usize) -> PyResult<Self> {
            let cfg = ModelConfig {
                input_hw,
                classes,
                ..ModelConfig::vgg9(kind(activation)?, bn, dropout)
            };
            Ok(Model { inner: build_vgg9(&cfg, seed).map_err(err)? })
        }

        #[getter]
        fn parameter_count(&self) -> usize {
            self.inner.parameter_count()
        }

        fn stage_shapes(&self) -> PyResult<Vec<Vec<usize>>> {
            self.inner.stage_shapes().map_err(err)
        }

        fn describe(&self) -> Vec<String> {
            self.inner.describe()
        }

        /// Class probabilities for a `batch × input` tensor.
        fn predict_proba(&mut self, x: PyRef<'_, Tensor>) -> PyResult<Tensor> {
            Ok(Tensor { inner: self.inner.predict_proba(&x.inner).map_err(err)? })
        }

        fn logits(&mut self, x: PyRef<'_, Tensor>) -> PyResult<Tensor> {
            Ok(Tensor { inner: self.inner.forward(&x.inner, Mode::Infer).map_err(err)? })
        }

        fn evaluate(&mut self, x: PyRef<'_, Tensor>, labels: Vec<usize>) -> PyResult<f64> {
            let classes = self.inner.classes();
            models::evaluate(&mut self.inner, &dataset(&x, labels, classes)?).map_err(err)
        }

        /// Trains with Adam and keeps the best-eval weights. Returns the
        /// per-epoch history as a list of dicts.
        #[pyo3(signature = (x, labels, eval_x, eval_labels, epochs = 10, batch_size = 100, learning_rate = 0.001, l2 = 1e-4, seed = 0))]
        #[allow(clippy::too_many_arguments)]
        fn train(
            &mut self,
            x: PyRef<'_, Tensor>,
            labels: Vec<usize>,
            eval_x: PyRef<'_, Tensor>,
            eval_labels: Vec<usize>,
            epochs: usize,
            batch_size: usize,
            learning_rate: f64,
            l2: f64,
            seed: u64,
        ) -> PyResult<Vec<HashMap<String, f64>>> {
            let classes = self.inner.classes();
            let train_set = dataset(&x, labels, classes)?;
            let eval_set = dataset(&eval_x, eval_labels, classes)?;
            let cfg = models::TrainConfig {
                learning_rate,
                batch_size,
                epochs,
                seed,
                l2_lambda: l2,
                l2_all_params: false,
            };
            let out = models::train(&mut self.inner, &train_set, &eval_set, &cfg).map_err(err)?;
            self.inner.load_state(&out.best_state).map_err(err)?;
            Ok(out
                .history
                .epochs
                .iter()
                .map(|e| {
                    HashMap::from([
                        ("epoch".to_string(), e.epoch as f64),
                        ("train_loss".to_string(), e.train_loss),
                        ("eval_accuracy".to_string(), e.eval_accuracy),
                        ("seconds".to_string(), e.seconds),
                    ])
                })
                .collect())
        }

        fn save(&self, path: &str) -> PyResult<()> {
            self.inner.save_checkpoint(path).map_err(err)
        }

        fn load(&mut self, path: &str) -> PyResult<()> {
            self.inner.load_checkpoint(path).map_err(err)
        }
    }

    /// `frames × 128` log-mel spectrogram with the default parameters.
    #[pyfunction]
    fn log_mel_spectrogram(samples: Vec<f64>, sample_rate: u32) -> PyResult<Tensor> {
        let p = SpectrogramParams::table3(sample_rate);
        Ok(Tensor { inner: dataio::log_mel_spectrogram(&samples, &p).map_err(err)? })
    }

    #[pyfunction]
    fn patch_split(spec: PyRef<'_, Tensor>, patch_frames: usize) -> PyResult<Vec<Tensor>> {
        Ok(dataio::patch_split(&spec.inner, patch_frames)
            .map_err(err)?
            .into_iter()
            .map(|inner| Tensor { inner })
            .collect())
    }

    #[pyfunction]
    fn read_wav(path: &str) -> PyResult<(Vec<f64>, u32)> {
        let (t, rate) = dataio::read_wav(path).map_err(err)?;
        Ok((t.into_data(), rate))
    }

    #[pyfunction]
    fn write_wav(path: &str, samples: Vec<f64>, sample_rate: u32) -> PyResult<()> {
        dataio::write_wav(path, &samples, sample_rate).map_err(err)
    }

    /// `(name, max_error, passed)` per check.
    #[pyfunction]
    #[pyo3(signature = (target = "all"))]
    fn gradcheck(target: &str) -> PyResult<Vec<(String, f64, bool)>> {
        let t: GradcheckTarget = target.parse().map_err(err)?;
        let report = run_gradcheck(t, Perturbation::default()).map_err(err)?;
        Ok(report
            .results
            .iter()
            .map(|r| (r.name.clone(), r.max_error, r.passed()))
            .collect())
    }

    /// Per-layer `(mean, variance)` of the 10-layer, 512-wide LeCun stack.
    #[pyfunction]
    #[pyo3(signature = (activation = "selu", seed = 0))]
    fn selu_demo(activation: &str, seed: u64) -> PyResult<Vec<(f64, f64)>> {
        let r = demo(kind(activation)?, DEMO_LAYERS, DEMO_WIDTH, DEMO_SAMPLES, seed).map_err(err)?;
        Ok(r.layers.iter().map(|m| (m.mean, m.variance)).collect())
    }

    /// Runs a suite config and returns its rows as CSV text.
    #[pyfunction]
    #[pyo3(signature = (config, epochs = None, seed = None))]
    fn run_suite(config: &str, epochs: Option<usize>, seed: Option<u64>) -> PyResult<String> {
        let opts = RunOptions { seed, epochs, csv_path: None };
        let rows = run_suite_file(config, &opts, |_| {}).map_err(err)?;
        actnet::bench::render_table(&rows, actnet::bench::TableFormat::Csv).map_err(err)
    }
}
