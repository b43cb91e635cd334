use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::knowledge::{
    concept_query, gcn_forward, ConceptBasis, ConceptQueryHead, GraphActivation,
};
use crate::numerics::{Matrix, SeededRng, Tape, Var};
use crate::representation::{
    aggregate_batch, AggregatorVars, EncoderPair, FeatureAggregator, FeatureSequence,
    InstanceEncoders,
};

/// All learnable state of the two-branch model.
///
/// The visual aggregator is shared between the instance embedding and the
/// concept query; captions use separate instance and concept aggregators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub instance: EncoderPair<InstanceEncoders>,
    pub text_concept: FeatureAggregator,
    pub query: ConceptQueryHead,
    /// Graph convolution weight `W_sc` (`d_c x F`).
    pub w_sc: Matrix,
    /// Prototype classifier `P^C` (`K x F`).
    pub classifier: Matrix,
    pub activation: GraphActivation,
}

/// Tape handles for every trainable matrix, in [`Model::parameters`] order.
#[derive(Clone, Copy, Debug)]
pub struct ModelVars {
    pub visual: AggregatorVars,
    pub textual: AggregatorVars,
    pub text_concept: AggregatorVars,
    pub w_v: Var,
    pub w_w: Var,
    pub w_sc: Var,
    pub classifier: Var,
}

impl ModelVars {
    pub fn list(&self) -> Vec<Var> {
        let agg = |a: &AggregatorVars| [a.proj, a.w1, a.b1, a.w2, a.b2];
        let mut out = Vec::with_capacity(19);
        out.extend(agg(&self.visual));
        out.extend(agg(&self.textual));
        out.extend(agg(&self.text_concept));
        out.extend([self.w_v, self.w_w, self.w_sc, self.classifier]);
        out
    }
}

/// Unit-norm embeddings of one side (images or captions).
#[derive(Clone, Debug, PartialEq)]
pub struct SideEmbeddings {
    pub instance: Matrix,
    pub concept: Matrix,
}

impl Model {
    pub fn new(
        cfg: &TrainConfig,
        image_dim: usize,
        caption_dim: usize,
        concept_dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let visual = FeatureAggregator::new(image_dim, cfg.dim, cfg.d_p, cfg.pool_hidden, rng)?;
        let textual = FeatureAggregator::new(caption_dim, cfg.dim, cfg.d_p, cfg.pool_hidden, rng)?;
        let text_concept =
            FeatureAggregator::new(caption_dim, cfg.dim, cfg.d_p, cfg.pool_hidden, rng)?;
        let query = ConceptQueryHead::new(cfg.dim, cfg.lambda_c, rng)?;
        let w_sc = rng.normal_matrix(concept_dim, cfg.dim, 1.0 / (concept_dim as f64).sqrt());
        let classifier = rng.normal_matrix(cfg.k_clusters, cfg.dim, 0.01);
        Ok(Model {
            instance: EncoderPair::new(InstanceEncoders { visual, textual }),
            text_concept,
            query,
            w_sc,
            classifier,
            activation: cfg.graph_activation,
        })
    }

    pub fn dim(&self) -> usize {
        self.instance.main.visual.output_dim()
    }

    /// Trainable matrices; momentum copies are excluded.
    pub fn parameters(&self) -> Vec<&Matrix> {
        let main = &self.instance.main;
        let mut out: Vec<&Matrix> = main.visual.parameters().into();
        out.extend(main.textual.parameters());
        out.extend(self.text_concept.parameters());
        out.extend([
            &self.query.w_v,
            &self.query.w_w,
            &self.w_sc,
            &self.classifier,
        ]);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let main = &mut self.instance.main;
        let mut out: Vec<&mut Matrix> = main.visual.parameters_mut().into();
        out.extend(main.textual.parameters_mut());
        out.extend(self.text_concept.parameters_mut());
        out.extend([
            &mut self.query.w_v,
            &mut self.query.w_w,
            &mut self.w_sc,
            &mut self.classifier,
        ]);
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> ModelVars {
        let main = &self.instance.main;
        let visual = main.visual.bind(tape, trainable);
        let textual = main.textual.bind(tape, trainable);
        let text_concept = self.text_concept.bind(tape, trainable);
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        ModelVars {
            visual,
            textual,
            text_concept,
            w_v: leaf(&self.query.w_v),
            w_w: leaf(&self.query.w_w),
            w_sc: leaf(&self.w_sc),
            classifier: leaf(&self.classifier),
        }
    }

    /// Concept representations `Y` from the frozen concept embeddings.
    pub fn concept_basis(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        basis: &ConceptBasis,
    ) -> Result<Var> {
        let x = basis.vocabulary.embeddings();
        if x.cols() != self.w_sc.rows() {
            return Err(Error::DimensionMismatch {
                op: "concept_basis",
                left: x.shape(),
                right: self.w_sc.shape(),
            });
        }
        let a = tape.constant(basis.a_tilde.clone());
        let x = tape.constant(x.clone());
        gcn_forward(tape, a, x, vars.w_sc, self.activation)
    }

    /// Image instance embeddings `v^I` and concept embeddings `v^C`.
    pub fn encode_images(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        y: Var,
        images: &[&FeatureSequence],
    ) -> Result<(Var, Var)> {
        let v_i = aggregate_batch(tape, &vars.visual, images)?;
        let v_c = self.visual_concepts(tape, vars, y, v_i)?;
        Ok((v_i, v_c))
    }

    /// `v^C` queried with the (shared) visual instance embeddings.
    pub fn visual_concepts(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        y: Var,
        v_i: Var,
    ) -> Result<Var> {
        Ok(concept_query(tape, vars.w_v, v_i, y, self.query.lambda)?.0)
    }

    /// Caption instance embeddings `w^I` and concept embeddings `w^C`.
    pub fn encode_captions(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        y: Var,
        captions: &[&FeatureSequence],
    ) -> Result<(Var, Var)> {
        let w_i = aggregate_batch(tape, &vars.textual, captions)?;
        let w_q = aggregate_batch(tape, &vars.text_concept, captions)?;
        let (w_c, _) = concept_query(tape, vars.w_w, w_q, y, self.query.lambda)?;
        Ok((w_i, w_c))
    }

    /// Value-only embeddings of images and captions.
    pub fn embed(
        &self,
        basis: &ConceptBasis,
        images: &[&FeatureSequence],
        captions: &[&FeatureSequence],
    ) -> Result<(SideEmbeddings, SideEmbeddings)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let y = self.concept_basis(&mut tape, &vars, basis)?;
        let (v_i, v_c) = self.encode_images(&mut tape, &vars, y, images)?;
        let (w_i, w_c) = self.encode_captions(&mut tape, &vars, y, captions)?;
        let side = |a: Var, b: Var| SideEmbeddings {
            instance: tape.value(a).clone(),
            concept: tape.value(b).clone(),
        };
        Ok((side(v_i, v_c), side(w_i, w_c)))
    }

    /// The trained concept representations as a plain matrix.
    pub fn concepts(&self, basis: &ConceptBasis) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let y = self.concept_basis(&mut tape, &vars, basis)?;
        Ok(tape.value(y).clone())
    }
}
