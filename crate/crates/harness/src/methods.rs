//! The three reconstruction methods exposed by the command line.

use std::fmt;
use std::str::FromStr;

use shapefit::altmin::{solve_altmin, AltMinInit, AltMinOptions};
use shapefit::convex::{solve_noisy, SolverOptions};
use shapefit::{LandmarkSet2D, Result as CoreResult, Shape3D, ShapeDictionary};

use crate::formats::{finite, rotation_rows, shape_rows, Diagnostics, ResultFile, FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Convex,
    AltMin,
    /// Alternating minimization started from the convex solution.
    AltMinWarm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Convex, Method::AltMin, Method::AltMinWarm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Convex => "convex",
            Method::AltMin => "altmin",
            Method::AltMinWarm => "altmin_warm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected convex, altmin or altmin_warm)"))
    }
}

/// Solver settings shared by all methods. `lambda` is taken from `convex`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MethodOptions {
    pub convex: SolverOptions,
    pub altmin: AltMinOptions,
}

impl MethodOptions {
    fn altmin(&self) -> AltMinOptions {
        AltMinOptions {
            lambda: self.convex.lambda,
            ..self.altmin.clone()
        }
    }
}

/// Runs `method` on one image and packages the outcome.
pub fn reconstruct(
    method: Method,
    w: &LandmarkSet2D,
    dict: &ShapeDictionary,
    opts: &MethodOptions,
) -> CoreResult<ResultFile> {
    let lambda = opts.convex.lambda;
    let base = |init_source: Option<&str>, coefficients: Vec<f64>, rotations, shape: &Shape3D, diagnostics| ResultFile {
        format_version: FORMAT_VERSION,
        method: method.name().to_string(),
        init_source: init_source.map(str::to_string),
        k: dict.len(),
        p: dict.num_landmarks(),
        lambda,
        // drop the sign of negative zeros left by soft-thresholding
        coefficients: coefficients.into_iter().map(|c| c + 0.0).collect(),
        rotations,
        points: shape_rows(shape),
        diagnostics,
    };
    match method {
        Method::Convex => {
            let res = solve_noisy(w, dict, &opts.convex)?;
            let diagnostics = Diagnostics {
                objective: finite(res.objective),
                iterations: res.iterations,
                converged: res.converged,
                primal_residual: finite(res.primal_residual),
                dual_residual: finite(res.dual_residual),
                tightness: Some(res.tightness.iter().map(|t| t.and_then(finite)).collect()),
            };
            let rotations = res.rotations.iter().map(rotation_rows).collect();
            Ok(base(None, res.coeffs.clone(), rotations, &res.shape, diagnostics))
        }
        Method::AltMin | Method::AltMinWarm => {
            let warm;
            let init = if method == Method::AltMinWarm {
                warm = solve_noisy(w, dict, &opts.convex)?;
                AltMinInit::WarmStart(&warm)
            } else {
                AltMinInit::MeanShape
            };
            let (state, shape) = solve_altmin(w, dict, &init, &opts.altmin())?;
            let diagnostics = Diagnostics {
                objective: finite(state.objective()),
                iterations: state.iterations,
                converged: state.converged,
                primal_residual: None,
                dual_residual: None,
                tightness: None,
            };
            let r = rotation_rows(&state.rotation());
            let rotations = vec![r; dict.len()];
            Ok(base(Some(init.name()), state.coeffs.clone(), rotations, &shape, diagnostics))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("pmp".parse::<Method>().is_err());
    }
}
