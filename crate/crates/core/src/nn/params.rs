use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

/// A fixed set of named dense tensors.
///
/// Gradients use the same type as the parameters they belong to, so every
/// differentiable block doubles as its own gradient accumulator.
pub trait Params: Clone {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'a, f64>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>));

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, mut a| a.fill(value));
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, a| n += a.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, a| out.extend(a.iter().copied()));
        out
    }

    fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        self.visit_mut("", &mut |_, mut a| {
            for (dst, src) in a.iter_mut().zip(&values[offset..]) {
                *dst = *src;
            }
            offset += a.len();
        });
    }

    /// `self += scale * other`.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        let mut views = Vec::new();
        other.visit("", &mut |_, a| views.push(a));
        let mut i = 0;
        self.visit_mut("", &mut |_, mut a| {
            a.scaled_add(scale, &views[i]);
            i += 1;
        });
    }

    fn scale(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, mut a| a.mapv_inplace(|x| x * factor));
    }

    fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, a| ok &= a.iter().all(|x| x.is_finite()));
        ok
    }

    fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        self.visit("", &mut |_, a| m = a.iter().fold(m, |m, x| m.max(x.abs())));
        m
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit("", &mut |name, _| out.push(name.to_string()));
        out
    }

    fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R, scale: f64)
    where
        Self: Sized,
    {
        self.visit_mut("", &mut |_, mut a| a.mapv_inplace(|_| rng.random_range(-scale..scale)));
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Params for Array1<f64> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'a, f64>)) {
        f(prefix, self.view().into_dyn());
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(prefix, self.view_mut().into_dyn());
    }
}

impl Params for Array2<f64> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'a, f64>)) {
        f(prefix, self.view().into_dyn());
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(prefix, self.view_mut().into_dyn());
    }
}

/// Implements [`Params`] for a struct whose listed fields are all `Params`.
#[macro_export]
macro_rules! impl_params {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::nn::Params for $ty {
            fn visit<'a>(
                &'a self,
                prefix: &str,
                f: &mut dyn FnMut(&str, ::ndarray::ArrayViewD<'a, f64>),
            ) {
                $( $crate::nn::Params::visit(&self.$field, &$crate::nn::params::join(prefix, stringify!($field)), f); )+
            }
            fn visit_mut(
                &mut self,
                prefix: &str,
                f: &mut dyn FnMut(&str, ::ndarray::ArrayViewMutD<'_, f64>),
            ) {
                $( $crate::nn::Params::visit_mut(&mut self.$field, &$crate::nn::params::join(prefix, stringify!($field)), f); )+
            }
        }
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[derive(Clone)]
    struct Pair {
        a: Array2<f64>,
        b: Array1<f64>,
    }
    crate::impl_params!(Pair { a, b });

    #[test]
    fn flat_round_trip_and_names() {
        let mut p = Pair {
            a: array![[1.0, 2.0], [3.0, 4.0]],
            b: array![5.0],
        };
        assert_eq!(p.to_flat(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(p.names(), vec!["a", "b"]);
        let q = p.clone();
        p.add_scaled(&q, 2.0);
        assert_eq!(p.to_flat(), vec![3.0, 6.0, 9.0, 12.0, 15.0]);
        p.set_flat(&[0.0; 5]);
        assert_eq!(p.max_abs(), 0.0);
    }
}
