// SPDX-License-Identifier: Apache-2.0
#include "tof/curves.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tof {

PulseProfile::PulseProfile(std::vector<double> samples, double grid_step_ns)
    : samples_(std::move(samples)), grid_step_(grid_step_ns) {
  if (samples_.size() < 2) throw std::invalid_argument("pulse needs at least two samples");
  if (grid_step_ <= 0.0) throw std::invalid_argument("pulse grid step must be positive");
  for (double v : samples_) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("pulse intensities must be finite and nonnegative");
  }
  cumulative_.resize(samples_.size());
  cumulative_[0] = 0.0;
  for (std::size_t i = 1; i < samples_.size(); ++i)
    cumulative_[i] = cumulative_[i - 1] + 0.5 * (samples_[i - 1] + samples_[i]) * grid_step_;
}

PulseProfile PulseProfile::trapezoid(double rise_ns, double plateau_ns, double fall_ns,
                                     double amplitude, double grid_step_ns) {
  if (rise_ns < 0 || plateau_ns < 0 || fall_ns < 0 || amplitude <= 0)
    throw std::invalid_argument("trapezoid pulse parameters must be nonnegative");
  double total = rise_ns + plateau_ns + fall_ns;
  int n = std::max(2, static_cast<int>(std::ceil(total / grid_step_ns)) + 1);
  std::vector<double> s(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double u = i * grid_step_ns;
    double v = 0.0;
    if (u <= rise_ns) {
      v = rise_ns > 0 ? u / rise_ns : 1.0;
    } else if (u <= rise_ns + plateau_ns) {
      v = 1.0;
    } else if (u <= total) {
      v = fall_ns > 0 ? (total - u) / fall_ns : 0.0;
    }
    s[static_cast<std::size_t>(i)] = amplitude * v;
  }
  return PulseProfile(std::move(s), grid_step_ns);
}

double PulseProfile::value_at(double u) const {
  double end = duration();
  if (u <= 0.0 || u >= end) {
    if (u == 0.0) return samples_.front();
    if (u == end) return samples_.back();
    return 0.0;
  }
  double pos = u / grid_step_;
  auto i = static_cast<std::size_t>(pos);
  if (i >= samples_.size() - 1) i = samples_.size() - 2;
  double frac = pos - static_cast<double>(i);
  return samples_[i] + (samples_[i + 1] - samples_[i]) * frac;
}

double PulseProfile::cumulative_at(double u) const {
  if (u <= 0.0) return 0.0;
  double end = duration();
  if (u >= end) return cumulative_.back();
  double pos = u / grid_step_;
  auto i = static_cast<std::size_t>(pos);
  if (i >= samples_.size() - 1) i = samples_.size() - 2;
  double xi = u - static_cast<double>(i) * grid_step_;
  double slope = (samples_[i + 1] - samples_[i]) / grid_step_;
  return cumulative_[i] + samples_[i] * xi + 0.5 * slope * xi * xi;
}

double PulseProfile::integrate(double a, double b) const {
  if (b <= a) return 0.0;
  return cumulative_at(b) - cumulative_at(a);
}

PulseProfile PulseProfile::scaled(double factor) const {
  std::vector<double> s = samples_;
  for (double& v : s) v *= factor;
  return PulseProfile(std::move(s), grid_step_);
}

Eigen::MatrixXd boxcar_basis_matrix(const BoxcarCatalog& catalog, const PulseProfile& pulse,
                                    const DepthGrid& grid) {
  if (catalog.empty()) throw std::invalid_argument("boxcar catalog is empty");
  if (grid.size < 2 || grid.t_max <= grid.t_min)
    throw std::invalid_argument("depth grid must be increasing with at least two points");
  if (grid.t_min <= 0.0)
    throw std::invalid_argument("depth grid must be strictly positive (decay 1/t^2)");
  for (const auto& b : catalog) {
    if (b.delay_ns < 0.0 || b.width_ns < 0.0)
      throw std::invalid_argument("boxcar delay and width must be nonnegative");
  }
  Eigen::MatrixXd q(grid.size, static_cast<Eigen::Index>(catalog.size()));
  for (int i = 0; i < grid.size; ++i) {
    double t = grid.t(i);
    double tau = t / kDepthCmPerNs;  // round-trip travel time in ns
    double decay = distance_decay(t);
    for (std::size_t j = 0; j < catalog.size(); ++j) {
      const auto& b = catalog[j];
      // Integral of S(u) P(u - tau) over the gate window, shifted into
      // pulse-local time.
      double v = pulse.integrate(b.delay_ns - tau, b.delay_ns + b.width_ns - tau);
      q(i, static_cast<Eigen::Index>(j)) = decay * v;
    }
  }
  return q;
}

Chebyshev::Chebyshev(std::vector<double> coefficients, double a, double b)
    : coef_(std::move(coefficients)), a_(a), b_(b) {
  if (coef_.empty()) throw std::invalid_argument("empty Chebyshev coefficients");
  if (!(b_ > a_)) throw std::invalid_argument("Chebyshev domain must satisfy a < b");
  build_derivatives();
}

namespace {

// Coefficients of the derivative of a Chebyshev series (domain scale is
// handled by the caller). Convention: f = c0 + sum_{k>=1} c_k T_k.
std::vector<double> cheb_derivative(const std::vector<double>& c) {
  auto n = static_cast<int>(c.size());
  if (n <= 1) return {0.0};
  std::vector<double> d(static_cast<std::size_t>(n + 1), 0.0);
  for (int k = n - 1; k >= 1; --k)
    d[static_cast<std::size_t>(k - 1)] =
        d[static_cast<std::size_t>(k + 1)] + 2.0 * k * c[static_cast<std::size_t>(k)];
  d[0] *= 0.5;
  d.resize(static_cast<std::size_t>(n - 1));
  return d;
}

double clenshaw(const std::vector<double>& c, double x) {
  double b1 = 0.0, b2 = 0.0;
  for (std::size_t k = c.size(); k-- > 1;) {
    double b0 = 2.0 * x * b1 - b2 + c[k];
    b2 = b1;
    b1 = b0;
  }
  return x * b1 - b2 + c[0];
}

}  // namespace

void Chebyshev::build_derivatives() {
  // Derivative series in x, rescaled by dx/dt = 2 / (b - a).
  double scale = 2.0 / (b_ - a_);
  dcoef_ = cheb_derivative(coef_);
  for (double& v : dcoef_) v *= scale;
  d2coef_ = cheb_derivative(dcoef_);
  for (double& v : d2coef_) v *= scale;
}

void Chebyshev::check_range(double t) const {
  double slack = 1e-9 * (b_ - a_);
  if (t < a_ - slack || t > b_ + slack)
    throw std::out_of_range("Chebyshev evaluation outside valid range");
}

double Chebyshev::value(double t) const {
  check_range(t);
  double x = (2.0 * t - a_ - b_) / (b_ - a_);
  return clenshaw(coef_, x);
}

ChebJet Chebyshev::eval(double t) const {
  check_range(t);
  double x = (2.0 * t - a_ - b_) / (b_ - a_);
  return {clenshaw(coef_, x), clenshaw(dcoef_, x), clenshaw(d2coef_, x)};
}

Chebyshev Chebyshev::fit(const std::vector<double>& t, const std::vector<double>& y,
                         double a, double b, int degree) {
  if (degree < 0) throw std::invalid_argument("negative Chebyshev degree");
  if (t.size() != y.size()) throw std::invalid_argument("sample size mismatch");
  if (t.size() < static_cast<std::size_t>(degree + 1))
    throw std::invalid_argument("fewer samples than Chebyshev coefficients");
  if (!(b > a)) throw std::invalid_argument("Chebyshev domain must satisfy a < b");

  const auto rows = static_cast<Eigen::Index>(t.size());
  const Eigen::Index cols = degree + 1;
  Eigen::MatrixXd design(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double x = (2.0 * t[static_cast<std::size_t>(i)] - a - b) / (b - a);
    double tm2 = 1.0, tm1 = x;
    design(i, 0) = 1.0;
    if (cols > 1) design(i, 1) = x;
    for (Eigen::Index k = 2; k < cols; ++k) {
      double tk = 2.0 * x * tm1 - tm2;
      design(i, k) = tk;
      tm2 = tm1;
      tm1 = tk;
    }
  }
  Eigen::Map<const Eigen::VectorXd> rhs(y.data(), rows);
  Eigen::VectorXd sol = design.colPivHouseholderQr().solve(rhs);
  std::vector<double> coef(sol.data(), sol.data() + sol.size());
  Chebyshev out(std::move(coef), a, b);
  out.fit_error_ = (design * sol - rhs).cwiseAbs().maxCoeff();
  return out;
}

ResponseCurveSet::ResponseCurveSet(std::vector<Chebyshev> channels, Eigen::VectorXd ambient,
                                   double cm_per_ns)
    : channels_(std::move(channels)), ambient_(std::move(ambient)), cm_per_ns_(cm_per_ns) {
  if (channels_.empty()) throw std::invalid_argument("curve set needs at least one channel");
  if (ambient_.size() != static_cast<Eigen::Index>(channels_.size()))
    throw std::invalid_argument("ambient vector length must match channel count");
  for (Eigen::Index i = 0; i < ambient_.size(); ++i)
    if (!(ambient_[i] >= 0.0)) throw std::invalid_argument("ambient entries must be nonnegative");
  t_min_ = channels_.front().lo();
  t_max_ = channels_.front().hi();
  for (const auto& c : channels_) {
    if (c.lo() != t_min_ || c.hi() != t_max_)
      throw std::invalid_argument("all channels must share one valid range");
    fit_error_ = std::max(fit_error_, c.fit_error());
  }
}

Eigen::VectorXd ResponseCurveSet::values(double t) const {
  Eigen::VectorXd v(channel_count());
  for (int i = 0; i < channel_count(); ++i) v[i] = channels_[static_cast<std::size_t>(i)].value(t);
  return v;
}

void ResponseCurveSet::values_jet(double t, Eigen::VectorXd& value, Eigen::VectorXd& d1) const {
  value.resize(channel_count());
  d1.resize(channel_count());
  for (int i = 0; i < channel_count(); ++i) {
    ChebJet j = channels_[static_cast<std::size_t>(i)].eval(t);
    value[i] = j.value;
    d1[i] = j.d1;
  }
}

ResponseCurveSet compose_curves(const Eigen::MatrixXd& q, const Eigen::MatrixXi& z,
                                const BoxcarCatalog& catalog, const DepthGrid& grid,
                                int degree, double ambient_gain) {
  if (q.cols() != z.rows()) throw std::invalid_argument("Q/Z dimension mismatch");
  if (q.rows() != grid.size) throw std::invalid_argument("Q/grid dimension mismatch");
  if (static_cast<std::size_t>(q.cols()) != catalog.size())
    throw std::invalid_argument("Q/catalog dimension mismatch");
  if ((z.array() < 0).any()) throw std::invalid_argument("design weights must be nonnegative");

  Eigen::MatrixXd c = q * z.cast<double>();
  std::vector<double> ts(static_cast<std::size_t>(grid.size));
  for (int i = 0; i < grid.size; ++i) ts[static_cast<std::size_t>(i)] = grid.t(i);

  std::vector<Chebyshev> channels;
  channels.reserve(static_cast<std::size_t>(z.cols()));
  Eigen::VectorXd ambient(z.cols());
  for (Eigen::Index k = 0; k < z.cols(); ++k) {
    std::vector<double> ys(static_cast<std::size_t>(grid.size));
    for (int i = 0; i < grid.size; ++i) ys[static_cast<std::size_t>(i)] = c(i, k);
    channels.push_back(Chebyshev::fit(ts, ys, grid.t_min, grid.t_max, degree));
    double a = 0.0;
    for (Eigen::Index j = 0; j < z.rows(); ++j)
      a += static_cast<double>(z(j, k)) * catalog[static_cast<std::size_t>(j)].width_ns;
    ambient[k] = ambient_gain * a;
  }
  return ResponseCurveSet(std::move(channels), std::move(ambient));
}

void write_curves(std::ostream& os, const ResponseCurveSet& curves) {
  os << "tofcurves 1\n";
  os << "version " << curves.meta.tool_version << "\n";
  os << "config_hash " << curves.meta.config_hash << "\n";
  os << "seed " << curves.meta.seed << "\n";
  os << "n " << curves.channel_count() << "\n";
  os << "degree " << curves.channels().front().degree() << "\n";
  os << "valid_range " << fmt_g17(curves.valid_range().lo) << " "
     << fmt_g17(curves.valid_range().hi) << "\n";
  os << "cm_per_ns " << fmt_g17(curves.cm_per_ns()) << "\n";
  os << "fit_error " << fmt_g17(curves.fit_error()) << "\n";
  os << "ambient";
  for (Eigen::Index i = 0; i < curves.ambient().size(); ++i)
    os << " " << fmt_g17(curves.ambient()[i]);
  os << "\n";
  for (int ch = 0; ch < curves.channel_count(); ++ch) {
    os << "channel " << ch;
    for (double c : curves.channels()[static_cast<std::size_t>(ch)].coefficients())
      os << " " << fmt_g17(c);
    os << "\n";
  }
  os << "end\n";
}

namespace {

std::vector<std::string> expect_line(std::istream& is, const std::string& key) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("curve file truncated at '" + key + "'");
  auto tokens = split_ws(line);
  if (tokens.empty() || tokens[0] != key)
    throw std::runtime_error("curve file: expected '" + key + "'");
  return tokens;
}

}  // namespace

ResponseCurveSet read_curves(std::istream& is) {
  auto magic = expect_line(is, "tofcurves");
  if (magic.size() != 2 || magic[1] != "1")
    throw std::runtime_error("unsupported curve file version");
  FileMeta meta;
  meta.tool_version = expect_line(is, "version").at(1);
  meta.config_hash = expect_line(is, "config_hash").at(1);
  meta.seed = expect_line(is, "seed").at(1);
  int n = std::stoi(expect_line(is, "n").at(1));
  int degree = std::stoi(expect_line(is, "degree").at(1));
  auto vr = expect_line(is, "valid_range");
  double lo = std::stod(vr.at(1)), hi = std::stod(vr.at(2));
  double cm_per_ns = std::stod(expect_line(is, "cm_per_ns").at(1));
  double fit_error = std::stod(expect_line(is, "fit_error").at(1));
  auto amb = expect_line(is, "ambient");
  if (static_cast<int>(amb.size()) != n + 1) throw std::runtime_error("ambient length mismatch");
  Eigen::VectorXd ambient(n);
  for (int i = 0; i < n; ++i) ambient[i] = std::stod(amb.at(static_cast<std::size_t>(i + 1)));
  std::vector<Chebyshev> channels;
  channels.reserve(static_cast<std::size_t>(n));
  for (int ch = 0; ch < n; ++ch) {
    auto row = expect_line(is, "channel");
    if (std::stoi(row.at(1)) != ch) throw std::runtime_error("channel index mismatch");
    if (static_cast<int>(row.size()) != degree + 3)
      throw std::runtime_error("channel coefficient count mismatch");
    std::vector<double> coef(static_cast<std::size_t>(degree + 1));
    for (int k = 0; k <= degree; ++k) coef[static_cast<std::size_t>(k)] = std::stod(row.at(static_cast<std::size_t>(k + 2)));
    channels.emplace_back(std::move(coef), lo, hi);
  }
  expect_line(is, "end");
  ResponseCurveSet out(std::move(channels), std::move(ambient), cm_per_ns);
  out.meta = meta;
  out.set_fit_error(fit_error);
  return out;
}

void save_curves(const std::string& path, const ResponseCurveSet& curves) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_curves(os, curves);
}

ResponseCurveSet load_curves(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open curve file: " + path);
  return read_curves(is);
}

CurveFamily::CurveFamily(ResponseCurveSet left, ResponseCurveSet right)
    : left_(std::move(left)), right_(std::move(right)) {
  if (left_.channel_count() != right_.channel_count())
    throw std::invalid_argument("curve family corners must share channel count");
  if (left_.channels().front().degree() != right_.channels().front().degree())
    throw std::invalid_argument("curve family corners must share degree");
  if (left_.valid_range().lo != right_.valid_range().lo ||
      left_.valid_range().hi != right_.valid_range().hi)
    throw std::invalid_argument("curve family corners must share valid range");
}

ResponseCurveSet CurveFamily::at(double x01) const {
  double x = std::clamp(x01, 0.0, 1.0);
  std::vector<Chebyshev> channels;
  channels.reserve(static_cast<std::size_t>(left_.channel_count()));
  for (int ch = 0; ch < left_.channel_count(); ++ch) {
    const auto& a = left_.channels()[static_cast<std::size_t>(ch)].coefficients();
    const auto& b = right_.channels()[static_cast<std::size_t>(ch)].coefficients();
    std::vector<double> c(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) c[k] = (1.0 - x) * a[k] + x * b[k];
    channels.emplace_back(std::move(c), left_.valid_range().lo, left_.valid_range().hi);
  }
  Eigen::VectorXd ambient = (1.0 - x) * left_.ambient() + x * right_.ambient();
  return ResponseCurveSet(std::move(channels), std::move(ambient), left_.cm_per_ns());
}

}  // namespace tof
