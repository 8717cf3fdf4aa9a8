#pragma once

// Leading-order value surface and first-order corrections.
//
//   V0(t,x,y1)  = u(lambda_bar(y1)^2 t, x)
//   V10(t,x,y1) = (t/2) C10(y1) V0_x V0_{x y1} / V0_xx
//   V01(t,x,y1) = -(t/2) C01(y1) (V0_x/V0_xx) ((V0_x)^2/V0_xx)_x
//   V2(t,x,y1,y2) = -1/2 phi(y1,y2) (V0_x)^2 / V0_xx
//
// Cross-derivatives are the genuine partials of u(lambda_bar^2(y1) t, x):
//   V0_y1   = t (lambda_bar lambda_bar')  (V0_x)^2 / V0_xx
//   V0_xy1  = t (lambda_bar lambda_bar') ((V0_x)^2 / V0_xx)_x
// All composite x-derivatives are expanded through the analytic stack; no
// nested finite differences.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "fpp/factor_models.hpp"
#include "fpp/roots.hpp"
#include "fpp/widder.hpp"

namespace fpp {

struct ExpansionResult {
    double v0 = 0.0;
    double v10 = 0.0;
    double v01 = 0.0;
    double combined = 0.0;
    double delta = 0.0;
    double epsilon = 0.0;
};

// x-derivative chains of A = V_x^2/V_xx and B = V_x/V_xx.
struct RatioStack {
    double A = 0.0, A_x = 0.0, A_xx = 0.0, A_xxx = 0.0;
    double B = 0.0, B_x = 0.0, B_xx = 0.0;

    static RatioStack from(const DerivativeStack& s) {
        const double p1 = s.d1, p2 = s.d2, p3 = s.d3, p4 = s.d4, p5 = s.d5;
        RatioStack r;
        r.A = p1 * p1 / p2;
        r.A_x = 2.0 * p1 - p1 * p1 * p3 / (p2 * p2);
        r.A_xx = 2.0 * p2 - 2.0 * p1 * p3 / p2 - p1 * p1 * p4 / (p2 * p2) +
                 2.0 * p1 * p1 * p3 * p3 / (p2 * p2 * p2);
        r.A_xxx = 2.0 * p3 - (2.0 * (p2 * p3 + p1 * p4) / p2 - 2.0 * p1 * p3 * p3 / (p2 * p2)) -
                  ((2.0 * p1 * p2 * p4 + p1 * p1 * p5) / (p2 * p2) -
                   2.0 * p1 * p1 * p3 * p4 / (p2 * p2 * p2)) +
                  (4.0 * p1 * p2 * p3 * p3 + 4.0 * p1 * p1 * p3 * p4) / (p2 * p2 * p2) -
                  6.0 * p1 * p1 * p3 * p3 * p3 / (p2 * p2 * p2 * p2);
        r.B = p1 / p2;
        r.B_x = 1.0 - p1 * p3 / (p2 * p2);
        r.B_xx = -((p2 * p3 + p1 * p4) / (p2 * p2) - 2.0 * p1 * p3 * p3 / (p2 * p2 * p2));
        return r;
    }
};

struct CorrectionStack {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

class ValueSurface {
  public:
    explicit ValueSurface(std::shared_ptr<const MarketModel> model)
        : model_(std::move(model)) {}

    const MarketModel& model() const { return *model_; }

    struct FactorContextData {
        double lambda_bar = 0.0;
        double lambda_bar_sq = 0.0;
        double lamlamp = 0.0;  // lambda_bar * lambda_bar'
        double c10 = 0.0;
        double c01 = 0.0;
        std::shared_ptr<PhiSolver> phi;
    };

    struct Point {
        double tau = 0.0;
        DerivativeStack u;
        double v_t = 0.0;
        RatioStack ratios;
    };

    const FactorContextData& context(double y1) const {
        {
            std::lock_guard<std::mutex> lk(mutex_);
            auto it = contexts_.find(y1);
            if (it != contexts_.end()) return it->second;
        }
        FactorContextData c;
        const AveragedCoefficients ac = averaged_coefficients(*model_, y1);
        c.lambda_bar = ac.lambda_bar;
        c.lambda_bar_sq = ac.lambda_bar * ac.lambda_bar;
        c.lamlamp = ac.lambda_bar * ac.lambda_bar_prime;
        c.c10 = ac.c10;
        c.c01 = ac.c01;
        std::lock_guard<std::mutex> lk(mutex_);
        return contexts_.emplace(y1, std::move(c)).first->second;
    }

    const PhiSolver& phi_solver(double y1) const {
        context(y1);
        std::unique_lock<std::mutex> lk(mutex_);
        auto& c = contexts_.at(y1);
        if (!c.phi) {
            lk.unlock();
            auto phi = std::make_shared<PhiSolver>(*model_, y1);
            lk.lock();
            if (!c.phi) c.phi = std::move(phi);
        }
        return *c.phi;
    }

    Point point(double t, double x, double y1) const {
        const PointKey key{t, x, y1};
        {
            std::lock_guard<std::mutex> lk(mutex_);
            auto it = points_.find(key);
            if (it != points_.end()) return it->second;
        }
        if (!(x > model_->v0.domain_lower))
            throw RangeError("wealth at or below the lower edge of the utility domain");
        const FactorContextData& c = context(y1);
        Point p;
        p.tau = c.lambda_bar_sq * t;
        p.u = u_derivatives(model_->widder, model_->v0, p.tau, x, 5);
        if (!(p.u.d1 > 0.0 && p.u.d2 < 0.0))
            throw ConcavityError("leading-order surface lost monotonicity or concavity");
        p.v_t = c.lambda_bar_sq * u_time_derivative(model_->widder, p.tau, x);
        p.ratios = RatioStack::from(p.u);
        std::lock_guard<std::mutex> lk(mutex_);
        points_.emplace(key, p);
        return p;
    }

    // V0 value and x-derivative stack
    DerivativeStack v0_eval(double t, double x, double y1) const { return point(t, x, y1).u; }

    double v0_time_derivative(double t, double x, double y1) const {
        return point(t, x, y1).v_t;
    }

    // true partials (V0_y1, V0_xy1)
    std::pair<double, double> v0_cross_derivatives(double t, double x, double y1) const {
        const Point p = point(t, x, y1);
        const double f = t * context(y1).lamlamp;
        return {f * p.ratios.A, f * p.ratios.A_x};
    }

    CorrectionStack v10_stack(double t, double x, double y1) const {
        const Point p = point(t, x, y1);
        const FactorContextData& c = context(y1);
        const double k = 0.5 * t * t * c.c10 * c.lamlamp;
        const RatioStack& r = p.ratios;
        return {k * r.A_x * r.B, k * (r.A_xx * r.B + r.A_x * r.B_x),
                k * (r.A_xxx * r.B + 2.0 * r.A_xx * r.B_x + r.A_x * r.B_xx)};
    }

    double v10_eval(double t, double x, double y1) const { return v10_stack(t, x, y1).value; }

    CorrectionStack v01_stack(double t, double x, double y1) const {
        const Point p = point(t, x, y1);
        const double k = -0.5 * t * context(y1).c01;
        const RatioStack& r = p.ratios;
        return {k * r.B * r.A_x, k * (r.B_x * r.A_x + r.B * r.A_xx),
                k * (r.B_xx * r.A_x + 2.0 * r.B_x * r.A_xx + r.B * r.A_xxx)};
    }

    double v01_eval(double t, double x, double y1) const { return v01_stack(t, x, y1).value; }

    double v2_eval(double t, double x, double y1, double y2) const {
        const Point p = point(t, x, y1);
        return -0.5 * phi_solver(y1).value(y2) * p.ratios.A;
    }

    // log-marginal coordinate: xi = -log V0_x - lambda_bar^2 t / 2
    double xi(double t, double x, double y1) const {
        const Point p = point(t, x, y1);
        return -std::log(p.u.d1) - 0.5 * context(y1).lambda_bar_sq * t;
    }

    // inverse of x -> xi at fixed (t, y1); xi is strictly increasing in x
    double x_from_xi(double t, double target_xi, double y1) const {
        const double dl = model_->v0.domain_lower;
        auto f = [&](double s) { return xi(t, dl + std::exp(s), y1) - target_xi; };
        double slo = 0.0, shi = 0.0;
        double flo = f(slo), fhi = f(shi);
        int tries = 0;
        while (flo > 0.0 && tries++ < 200) {
            slo -= (tries < 10 ? 1.0 : 5.0);
            flo = f(slo);
        }
        tries = 0;
        while (fhi < 0.0 && tries++ < 200) {
            shi += (tries < 10 ? 1.0 : 5.0);
            fhi = f(shi);
        }
        if (!(flo <= 0.0 && fhi >= 0.0))
            throw RangeError("xi value outside the image of the wealth domain");
        const double s = brent(f, slo, shi, flo, fhi, 1e-13);
        return dl + std::exp(s);
    }

    double w0(double t, double xi_value, double y1) const {
        return v0_eval(t, x_from_xi(t, xi_value, y1), y1).value;
    }

    // Checks the aggregation identity: the correction equals the time integral
    // of auxiliary surfaces started at s and propagated to t.  In x-form the
    // slow auxiliary integrand is s * C10 * lamlamp * (A_x B)(t,x) and the
    // fast one is the s-independent -(C01/2) (A_x B)(t,x).
    double natural_parametrization_check(double t, double x, double y1, int n_quad = 32) const {
        const Point p = point(t, x, y1);
        const FactorContextData& c = context(y1);
        const double d = p.ratios.A_x * p.ratios.B;
        std::vector<double> gx, gw;
        gauss_legendre(n_quad, gx, gw);
        double quad_slow = 0.0, quad_fast = 0.0;
        for (int i = 0; i < n_quad; ++i) {
            const double s = 0.5 * t * (1.0 + gx[i]);
            const double w = 0.5 * t * gw[i];
            quad_slow += w * (s * c.c10 * c.lamlamp * d);
            quad_fast += w * (-0.5 * c.c01 * d);
        }
        const double disc_slow = std::abs(quad_slow - v10_eval(t, x, y1));
        const double disc_fast = std::abs(quad_fast - v01_eval(t, x, y1));
        return std::max(disc_slow, disc_fast);
    }

    ExpansionResult approx_value(double t, double x, double y1, double /*y2*/, double delta,
                                 double epsilon) const {
        ExpansionResult r;
        r.delta = delta;
        r.epsilon = epsilon;
        r.v0 = v0_eval(t, x, y1).value;
        r.v10 = v10_eval(t, x, y1);
        r.v01 = v01_eval(t, x, y1);
        r.combined = r.v0 + std::sqrt(delta) * r.v10 + std::sqrt(epsilon) * r.v01;
        return r;
    }

  private:
    struct PointKey {
        double t, x, y1;
        bool operator==(const PointKey&) const = default;
    };
    struct PointKeyHash {
        static std::uint64_t mix(double v) {
            std::uint64_t b;
            std::memcpy(&b, &v, sizeof(b));
            b ^= b >> 33;
            return b * 0x9e3779b97f4a7c15ULL;
        }
        std::size_t operator()(const PointKey& k) const {
            std::uint64_t h = mix(k.t);
            h = (h ^ mix(k.x)) * 0xbf58476d1ce4e5b9ULL;
            h = (h ^ mix(k.y1)) * 0x94d049bb133111ebULL;
            return static_cast<std::size_t>(h ^ (h >> 29));
        }
    };

    std::shared_ptr<const MarketModel> model_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<double, FactorContextData> contexts_;
    mutable std::unordered_map<PointKey, Point, PointKeyHash> points_;
};

}  // namespace fpp
