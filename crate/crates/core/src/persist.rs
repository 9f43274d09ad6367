//! Versioned plain-text model files.
//!
//! Every number is written as `{:.16e}` (17 significant digits), which
//! round-trips an `f64` exactly, so save → load → save reproduces the file
//! byte for byte. A file looks like
//!
//! ```text
//! annbn-model 1
//! transform identity
//! model sigmoid
//! activation logistic 1.0000000000000000e-6
//! norm <y_min> <y_max> <lo> <hi>
//! n_features 1
//! matrix weights 2 3
//! <row>
//! <row>
//! vector output 4
//! <values>
//! end
//! ```
//!
//! Nested models (ensemble members, classifier heads) repeat the `model … end`
//! block after a `member <i>` line.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::activation::{ActivationKind, Sigmoid};
use crate::dataset::{FeatureTransform, NormParams};
use crate::deep::DeepNet;
use crate::ensemble::{Ensemble, Member};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rbf_net::{Kernel, KernelKind, RbfCluster, RbfNet};
use crate::sigmoid_net::{Classifier, SigmoidNet};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "annbn-model";

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Sigmoid(SigmoidNet),
    Rbf(RbfNet),
    Deep(DeepNet),
    Ensemble(Ensemble),
    Classifier(Classifier),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Sigmoid(_) => "sigmoid",
            Model::Rbf(_) => "rbf",
            Model::Deep(_) => "deep",
            Model::Ensemble(_) => "ensemble",
            Model::Classifier(_) => "classifier",
        }
    }

    /// Regression output, or predicted labels for a classifier.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Model::Sigmoid(m) => m.predict(x),
            Model::Rbf(m) => m.predict(x),
            Model::Deep(m) => m.predict(x),
            Model::Ensemble(m) => m.predict(x),
            Model::Classifier(m) => m.classify(x),
        }
    }
}

/// A model together with the feature transform applied before it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub transform: FeatureTransform,
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model) -> Self {
        ModelFile { transform: FeatureTransform::Identity, model }
    }

    /// Applies the stored transform, then the model.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.model.predict(&self.transform.apply(x)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn to_text(&self) -> String {
        let mut w = Writer::default();
        w.line(&format!("{MAGIC} {FORMAT_VERSION}"));
        match &self.transform {
            FeatureTransform::Identity => w.line("transform identity"),
            FeatureTransform::Scale(s) => w.line(&format!("transform scale {}", num(*s))),
            FeatureTransform::MinMax { min, max } => {
                w.line(&format!("transform minmax {}", min.len()));
                w.vector("min", min);
                w.vector("max", max);
            }
        }
        w.model(&self.model);
        w.out
    }
}

impl FromStr for ModelFile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let (line, header) = r.next_tokens()?;
        if header.len() != 2 || header[0] != MAGIC {
            return Err(Error::Format { line, msg: format!("expected `{MAGIC} <version>` header") });
        }
        let version: u32 = parse_tok(header[1], line)?;
        if version > FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
        }
        let (line, t) = r.keyword("transform")?;
        let transform = match t.first().copied() {
            Some("identity") => FeatureTransform::Identity,
            Some("scale") => FeatureTransform::Scale(parse_tok(arg(&t, 1, line)?, line)?),
            Some("minmax") => {
                let n: usize = parse_tok(arg(&t, 1, line)?, line)?;
                let min = r.vector("min", Some(n))?;
                let max = r.vector("max", Some(n))?;
                FeatureTransform::MinMax { min, max }
            }
            _ => return Err(Error::Format { line, msg: "unknown feature transform".to_string() }),
        };
        let model = r.model()?;
        if let Some((line, _)) = r.peek() {
            return Err(Error::Format { line, msg: "trailing content after model".to_string() });
        }
        Ok(ModelFile { transform, model })
    }
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    ModelFile::load(path)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Default)]
struct Writer {
    out: String,
}

impl Writer {
    fn line(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn values(&mut self, v: &[f64]) {
        let mut s = String::with_capacity(v.len() * 24);
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.16e}");
        }
        self.line(&s);
    }

    fn vector(&mut self, name: &str, v: &[f64]) {
        self.line(&format!("vector {name} {}", v.len()));
        self.values(v);
    }

    fn matrix(&mut self, name: &str, m: &Matrix) {
        self.line(&format!("matrix {name} {} {}", m.nrows(), m.ncols()));
        for row in m.rows() {
            self.values(row);
        }
    }

    fn activation(&mut self, a: &ActivationKind) {
        self.line(&format!("activation {} {}", a.kind, num(a.clamp_eps)));
    }

    fn norm(&mut self, n: Option<&NormParams>) {
        match n {
            None => self.line("norm none"),
            Some(n) => self.line(&format!("norm {} {} {} {}", num(n.y_min), num(n.y_max), num(n.lo), num(n.hi))),
        }
    }

    fn sigmoid(&mut self, net: &SigmoidNet) {
        self.line("model sigmoid");
        self.activation(&net.activation);
        self.norm(Some(&net.norm));
        self.line(&format!("n_features {}", net.n_features));
        self.matrix("weights", &net.weights);
        self.vector("output", &net.output);
        self.line("end");
    }

    fn model(&mut self, model: &Model) {
        match model {
            Model::Sigmoid(net) => self.sigmoid(net),
            Model::Rbf(net) => {
                self.line("model rbf");
                self.line(&format!("kernel {} {}", net.kernel.kind, num(net.kernel.c)));
                self.norm(net.norm.as_ref());
                self.line(&format!("n_features {}", net.n_features));
                self.line(&format!("clusters {}", net.clusters.len()));
                for (k, c) in net.clusters.iter().enumerate() {
                    self.line(&format!("cluster {k}"));
                    self.matrix("centers", &c.centers);
                    self.vector("w", &c.w);
                }
                self.vector("output", &net.output);
                self.line("end");
            }
            Model::Deep(net) => {
                self.line("model deep");
                self.activation(&net.activation);
                self.norm(Some(&net.norm));
                self.line(&format!("n_features {}", net.n_features));
                self.line(&format!("layers {}", net.layers.len()));
                for w in &net.layers {
                    self.matrix("layer", w);
                }
                self.vector("output", &net.output);
                self.line("end");
            }
            Model::Ensemble(ens) => {
                self.line("model ensemble");
                self.line(&format!("alpha {}", num(ens.alpha)));
                self.vector("fold_errors", &ens.fold_errors);
                self.line(&format!("members {}", ens.members.len()));
                for (i, m) in ens.members.iter().enumerate() {
                    self.line(&format!("member {i}"));
                    match m {
                        Member::Sigmoid(net) => self.model(&Model::Sigmoid(net.clone())),
                        Member::Rbf(net) => self.model(&Model::Rbf(net.clone())),
                    }
                }
                self.line("end");
            }
            Model::Classifier(clf) => {
                self.line("model classifier");
                self.vector("classes", &clf.classes);
                self.line(&format!("members {}", clf.nets.len()));
                for (i, net) in clf.nets.iter().enumerate() {
                    self.line(&format!("member {i}"));
                    self.sigmoid(net);
                }
                self.line("end");
            }
        }
    }
}

fn parse_tok<T: FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Format { line, msg: format!("cannot parse `{tok}`") })
}

fn arg<'a>(tokens: &[&'a str], i: usize, line: usize) -> Result<&'a str> {
    tokens.get(i).copied().ok_or_else(|| Error::Format { line, msg: "missing value".to_string() })
}

struct Reader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { lines: text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect(), pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0)
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines[self.pos..].iter().copied().find(|(_, l)| !l.trim().is_empty())
    }

    fn next_raw(&mut self) -> Result<(usize, &'a str)> {
        let line = self.lines.get(self.pos).copied();
        self.pos += 1;
        line.ok_or_else(|| Error::Format { line: self.last_line(), msg: "unexpected end of file".to_string() })
    }

    fn next_tokens(&mut self) -> Result<(usize, Vec<&'a str>)> {
        loop {
            let (n, l) = self.next_raw()?;
            if !l.trim().is_empty() {
                return Ok((n, l.split_whitespace().collect()));
            }
        }
    }

    /// Next line must start with `kw`; returns the remaining tokens.
    fn keyword(&mut self, kw: &str) -> Result<(usize, Vec<&'a str>)> {
        let (line, t) = self.next_tokens()?;
        if t[0] != kw {
            return Err(Error::Format { line, msg: format!("expected `{kw}`, found `{}`", t[0]) });
        }
        Ok((line, t[1..].to_vec()))
    }

    fn count(&mut self, kw: &str) -> Result<usize> {
        let (line, t) = self.keyword(kw)?;
        parse_tok(arg(&t, 0, line)?, line)
    }

    fn values(&mut self, expect: usize) -> Result<Vec<f64>> {
        let (line, l) = self.next_raw()?;
        let v = l.split_whitespace().map(|t| parse_tok::<f64>(t, line)).collect::<Result<Vec<_>>>()?;
        if v.len() != expect {
            return Err(Error::Format { line, msg: format!("expected {expect} values, found {}", v.len()) });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Format { line, msg: "non-finite value".to_string() });
        }
        Ok(v)
    }

    fn vector(&mut self, name: &str, len: Option<usize>) -> Result<Vec<f64>> {
        let (line, t) = self.keyword("vector")?;
        if arg(&t, 0, line)? != name {
            return Err(Error::Format { line, msg: format!("expected vector `{name}`") });
        }
        let n: usize = parse_tok(arg(&t, 1, line)?, line)?;
        if let Some(want) = len {
            if n != want {
                return Err(Error::Format { line, msg: format!("vector `{name}` should hold {want} values, not {n}") });
            }
        }
        self.values(n)
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        let (line, t) = self.keyword("matrix")?;
        if arg(&t, 0, line)? != name {
            return Err(Error::Format { line, msg: format!("expected matrix `{name}`") });
        }
        let rows: usize = parse_tok(arg(&t, 1, line)?, line)?;
        let cols: usize = parse_tok(arg(&t, 2, line)?, line)?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.values(cols)?);
        }
        Matrix::from_vec(rows, cols, data)
    }

    fn activation(&mut self) -> Result<ActivationKind> {
        let (line, t) = self.keyword("activation")?;
        let kind: Sigmoid = arg(&t, 0, line)?.parse().map_err(|_| Error::Format { line, msg: "unknown activation".to_string() })?;
        let eps: f64 = parse_tok(arg(&t, 1, line)?, line)?;
        ActivationKind::new(kind, eps).map_err(|e| Error::Format { line, msg: e.to_string() })
    }

    fn norm(&mut self) -> Result<Option<NormParams>> {
        let (line, t) = self.keyword("norm")?;
        if t.first() == Some(&"none") {
            return Ok(None);
        }
        let v = (0..4).map(|i| parse_tok::<f64>(arg(&t, i, line)?, line)).collect::<Result<Vec<_>>>()?;
        NormParams::new(v[0], v[1], v[2], v[3]).map(Some).map_err(|e| Error::Format { line, msg: e.to_string() })
    }

    fn required_norm(&mut self) -> Result<NormParams> {
        let line = self.peek().map_or(self.last_line(), |l| l.0);
        self.norm()?.ok_or(Error::Format { line, msg: "this model kind needs response normalization".to_string() })
    }

    fn end(&mut self) -> Result<()> {
        self.keyword("end").map(|_| ())
    }

    fn sigmoid_body(&mut self) -> Result<SigmoidNet> {
        let activation = self.activation()?;
        let norm = self.required_norm()?;
        let n_features = self.count("n_features")?;
        let weights = self.matrix("weights")?;
        let output = self.vector("output", Some(weights.ncols() + 1))?;
        self.end()?;
        Ok(SigmoidNet { weights, output, activation, norm, n_features })
    }

    fn member_header(&mut self, i: usize) -> Result<()> {
        let (line, t) = self.keyword("member")?;
        if arg(&t, 0, line)? != i.to_string() {
            return Err(Error::Format { line, msg: format!("expected member {i}") });
        }
        Ok(())
    }

    fn model(&mut self) -> Result<Model> {
        let (line, t) = self.keyword("model")?;
        match arg(&t, 0, line)? {
            "sigmoid" => Ok(Model::Sigmoid(self.sigmoid_body()?)),
            "rbf" => {
                let (kl, kt) = self.keyword("kernel")?;
                let kind: KernelKind = arg(&kt, 0, kl)?.parse().map_err(|_| Error::Format { line: kl, msg: "unknown kernel".to_string() })?;
                let kernel = Kernel::new(kind, parse_tok(arg(&kt, 1, kl)?, kl)?).map_err(|e| Error::Format { line: kl, msg: e.to_string() })?;
                let norm = self.norm()?;
                let n_features = self.count("n_features")?;
                let k = self.count("clusters")?;
                let mut clusters = Vec::with_capacity(k);
                for i in 0..k {
                    let (cl, ct) = self.keyword("cluster")?;
                    if arg(&ct, 0, cl)? != i.to_string() {
                        return Err(Error::Format { line: cl, msg: format!("expected cluster {i}") });
                    }
                    let centers = self.matrix("centers")?;
                    let w = self.vector("w", Some(centers.nrows()))?;
                    clusters.push(RbfCluster { centers, w });
                }
                let output = self.vector("output", Some(k + 1))?;
                self.end()?;
                Ok(Model::Rbf(RbfNet { kernel, clusters, output, norm, n_features }))
            }
            "deep" => {
                let activation = self.activation()?;
                let norm = self.required_norm()?;
                let n_features = self.count("n_features")?;
                let l = self.count("layers")?;
                let layers = (0..l).map(|_| self.matrix("layer")).collect::<Result<Vec<_>>>()?;
                let width = layers.last().map_or(0, Matrix::ncols);
                let output = self.vector("output", Some(width + 1))?;
                self.end()?;
                Ok(Model::Deep(DeepNet { layers, output, activation, norm, n_features }))
            }
            "ensemble" => {
                let (al, at) = self.keyword("alpha")?;
                let alpha = parse_tok(arg(&at, 0, al)?, al)?;
                let fold_errors = self.vector("fold_errors", None)?;
                let k = self.count("members")?;
                if k != fold_errors.len() || k == 0 {
                    return Err(Error::Format { line: al, msg: format!("{k} members for {} fold errors", fold_errors.len()) });
                }
                let mut members = Vec::with_capacity(k);
                for i in 0..k {
                    self.member_header(i)?;
                    let ml = self.peek().map_or(self.last_line(), |l| l.0);
                    members.push(match self.model()? {
                        Model::Sigmoid(n) => Member::Sigmoid(n),
                        Model::Rbf(n) => Member::Rbf(n),
                        other => return Err(Error::Format { line: ml, msg: format!("`{}` cannot be an ensemble member", other.kind()) }),
                    });
                }
                self.end()?;
                Ok(Model::Ensemble(Ensemble { members, fold_errors, alpha }))
            }
            "classifier" => {
                let classes = self.vector("classes", None)?;
                let k = self.count("members")?;
                let line = self.peek().map_or(self.last_line(), |l| l.0);
                if k != classes.len() {
                    return Err(Error::Format { line, msg: format!("{k} members for {} classes", classes.len()) });
                }
                let mut nets = Vec::with_capacity(k);
                for i in 0..k {
                    self.member_header(i)?;
                    self.keyword("model").and_then(|(l, t)| {
                        if t.first() == Some(&"sigmoid") {
                            Ok(())
                        } else {
                            Err(Error::Format { line: l, msg: "classifier members must be sigmoid nets".to_string() })
                        }
                    })?;
                    nets.push(self.sigmoid_body()?);
                }
                self.end()?;
                Ok(Model::Classifier(Classifier { classes, nets }))
            }
            other => Err(Error::Format { line, msg: format!("unknown model kind `{other}`") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::ensemble::{fit_ensemble, BaseConfig};
    use crate::rbf_net::{fit_rbf, RbfConfig};
    use crate::rng::SeededRng;
    use crate::sigmoid_net::{fit, SigmoidConfig};

    fn data() -> Dataset {
        let mut r = SeededRng::new(8);
        let x = Matrix::from_fn(40, 2, |_, _| r.uniform());
        let y = x.rows().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        Dataset::new(x, y).unwrap()
    }

    fn round_trip(file: &ModelFile) {
        let text = file.to_text();
        let back: ModelFile = text.parse().unwrap();
        assert_eq!(&back, file);
        assert_eq!(back.to_text(), text);
        let d = data();
        assert_eq!(back.predict(&d.x).unwrap(), file.predict(&d.x).unwrap());
    }

    #[test]
    fn sigmoid_round_trip() {
        let (net, _) = fit(&data(), &SigmoidConfig::default()).unwrap();
        round_trip(&ModelFile::new(Model::Sigmoid(net)));
    }

    #[test]
    fn rbf_and_transform_round_trip() {
        let d = data();
        let (net, _) = fit_rbf(&d, &RbfConfig { neurons: Some(3), normalize: Some((0.1, 0.9)), ..RbfConfig::default() }).unwrap();
        round_trip(&ModelFile { transform: FeatureTransform::fit_min_max(&d.x), model: Model::Rbf(net) });
        let (net, _) = fit_rbf(&d, &RbfConfig::default()).unwrap();
        round_trip(&ModelFile { transform: FeatureTransform::Scale(1.0 / 255.0), model: Model::Rbf(net) });
    }

    #[test]
    fn ensemble_round_trip() {
        let ens = fit_ensemble(&data(), &BaseConfig::Sigmoid(SigmoidConfig::default()), 3, 0.8, 2).unwrap();
        round_trip(&ModelFile::new(Model::Ensemble(ens)));
    }

    #[test]
    fn newer_version_rejected() {
        let (net, _) = fit(&data(), &SigmoidConfig::default()).unwrap();
        let text = ModelFile::new(Model::Sigmoid(net)).to_text().replacen("annbn-model 1", "annbn-model 2", 1);
        assert!(matches!(text.parse::<ModelFile>(), Err(Error::UnsupportedVersion { found: 2, supported: 1 })));
    }

    #[test]
    fn corrupt_values_report_line() {
        let (net, _) = fit(&data(), &SigmoidConfig::default()).unwrap();
        let text = ModelFile::new(Model::Sigmoid(net)).to_text();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[7] = "1.0 abc".to_string();
        match lines.join("\n").parse::<ModelFile>() {
            Err(Error::Format { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!("hello".parse::<ModelFile>(), Err(Error::Format { line: 1, .. })));
        assert!(matches!("annbn-model 1\n".parse::<ModelFile>(), Err(Error::Format { .. })));
    }
}
