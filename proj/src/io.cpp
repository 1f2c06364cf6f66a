#include "ggmm/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace ggmm {

namespace {

constexpr int kDigits = 17;

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw FormatError("cannot write " + path);
  out << std::setprecision(kDigits);
  return out;
}

void expect_line(std::istream& in, const std::string& want, const char* what) {
  std::string line;
  if (!std::getline(in, line) || line != want)
    throw FormatError(std::string(what) + ": expected '" + want + "', got '" + line + "'");
}

double read_real(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) throw FormatError(std::string(what) + ": unexpected end of file");
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw FormatError(std::string(what) + ": bad number '" + tok + "'");
  }
  if (used != tok.size() || !std::isfinite(v))
    throw FormatError(std::string(what) + ": bad number '" + tok + "'");
  return v;
}

void write_row(std::ostream& out, const double* v, std::size_t n, std::size_t stride = 1) {
  for (std::size_t i = 0; i < n; ++i) out << (i ? " " : "") << v[i * stride];
  out << '\n';
}

void finish(std::ostream& out, const std::string& path) {
  out.flush();
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace

void write_lut(std::ostream& out, const DiscrepancyLUT& lut) {
  out << std::setprecision(kDigits);
  out << "GGLUT1\n";
  out << "nu 100 0.3 2.0 linear\n";
  out << "lambda 100 1e-3 1e3 log\n";
  const std::pair<const char*, const std::vector<double>*> blocks[] = {
      {"gamma0", &lut.gamma0}, {"beta1", &lut.beta1}, {"beta2", &lut.beta2}, {"h", &lut.h}};
  for (const auto& [name, table] : blocks) {
    out << name << '\n';
    for (std::size_t i = 0; i < DiscrepancyLUT::kNuCount; ++i)
      write_row(out, table->data() + DiscrepancyLUT::index(i, 0), DiscrepancyLUT::kLambdaCount);
  }
}

DiscrepancyLUT read_lut(std::istream& in) {
  expect_line(in, "GGLUT1", "lut header");
  expect_line(in, "nu 100 0.3 2.0 linear", "lut nu grid");
  expect_line(in, "lambda 100 1e-3 1e3 log", "lut lambda grid");
  DiscrepancyLUT lut;
  std::pair<const char*, std::vector<double>*> blocks[] = {
      {"gamma0", &lut.gamma0}, {"beta1", &lut.beta1}, {"beta2", &lut.beta2}, {"h", &lut.h}};
  for (auto& [name, table] : blocks) {
    std::string tok;
    if (!(in >> tok) || tok != name)
      throw FormatError(std::string("lut: expected block '") + name + "'");
    for (auto& v : *table) v = read_real(in, "lut");
  }
  for (double v : lut.h)
    if (!(v > 0.0)) throw FormatError("lut: non-positive softplus sharpness");
  return lut;
}

void save_lut(const std::string& path, const DiscrepancyLUT& lut) {
  auto out = open_out(path);
  write_lut(out, lut);
  finish(out, path);
}

DiscrepancyLUT load_lut(const std::string& path) {
  auto in = open_in(path);
  return read_lut(in);
}

void write_model(std::ostream& out, const GGMMModel& model) {
  out << std::setprecision(kDigits);
  const std::size_t P = model.P();
  out << "GGMM1\n" << model.K() << ' ' << P << ' ' << to_string(model.mode) << '\n';
  for (std::size_t k = 0; k < model.K(); ++k) {
    out << model.weights[k] << '\n';
    const Eigen::MatrixXd& U = model.bases[k];
    for (std::size_t r = 0; r < P; ++r) {
      for (std::size_t c = 0; c < P; ++c) out << (c ? " " : "") << U(r, c);
      out << '\n';
    }
    for (std::size_t j = 0; j < P; ++j) out << (j ? " " : "") << model.scales(k, j);
    out << '\n';
    for (std::size_t j = 0; j < P; ++j) out << (j ? " " : "") << model.shapes(k, j);
    out << '\n';
  }
}

GGMMModel read_model(std::istream& in) {
  expect_line(in, "GGMM1", "model header");
  std::size_t K = 0, P = 0;
  std::string mode;
  if (!(in >> K >> P >> mode) || K == 0 || P == 0)
    throw FormatError("model: bad 'K P mode' line");
  GGMMModel m;
  try {
    m.mode = parse_mixture_mode(mode);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  m.weights.resize(K);
  m.bases.assign(K, Eigen::MatrixXd(P, P));
  m.scales.resize(K, P);
  m.shapes.resize(K, P);
  for (std::size_t k = 0; k < K; ++k) {
    m.weights[k] = read_real(in, "model weight");
    for (std::size_t r = 0; r < P; ++r)
      for (std::size_t c = 0; c < P; ++c) m.bases[k](r, c) = read_real(in, "model basis");
    for (std::size_t j = 0; j < P; ++j) m.scales(k, j) = read_real(in, "model scales");
    for (std::size_t j = 0; j < P; ++j) m.shapes(k, j) = read_real(in, "model shapes");
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  return m;
}

void save_model(const std::string& path, const GGMMModel& model) {
  auto out = open_out(path);
  write_model(out, model);
  finish(out, path);
}

GGMMModel load_model(const std::string& path) {
  auto in = open_in(path);
  return read_model(in);
}

void write_patches(std::ostream& out, const PatchMatrix& patches) {
  out << std::setprecision(kDigits);
  out << "PATCH1\n" << patches.rows() << ' ' << patches.cols() << '\n';
  for (Eigen::Index i = 0; i < patches.cols(); ++i)
    write_row(out, patches.col(i).data(), static_cast<std::size_t>(patches.rows()));
}

PatchMatrix read_patches(std::istream& in) {
  expect_line(in, "PATCH1", "patch header");
  Eigen::Index P = 0, n = 0;
  if (!(in >> P >> n) || P <= 0 || n <= 0) throw FormatError("patches: bad 'P n' line");
  PatchMatrix z(P, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < P; ++j) z(j, i) = read_real(in, "patches");
  return z;
}

void save_patches(const std::string& path, const PatchMatrix& patches) {
  auto out = open_out(path);
  write_patches(out, patches);
  finish(out, path);
}

PatchMatrix load_patches(const std::string& path) {
  auto in = open_in(path);
  return read_patches(in);
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  while (true) {
    int c = in.peek();
    if (c == EOF) throw FormatError("pgm: truncated header");
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      break;
    }
  }
  while (in.peek() != EOF && !std::isspace(in.peek()) && in.peek() != '#')
    tok.push_back(static_cast<char>(in.get()));
  return tok;
}

std::size_t pgm_number(std::istream& in, const char* what) {
  const std::string tok = pgm_token(in);
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError(std::string("pgm: bad ") + what + " '" + tok + "'");
  return std::stoul(tok);
}

}  // namespace

ImageBuffer read_pgm(std::istream& in) {
  if (pgm_token(in) != "P5") throw FormatError("pgm: only binary P5 is supported");
  const std::size_t w = pgm_number(in, "width");
  const std::size_t h = pgm_number(in, "height");
  const std::size_t maxval = pgm_number(in, "maxval");
  if (w == 0 || h == 0) throw FormatError("pgm: empty image");
  if (maxval != 255) throw FormatError("pgm: only 8-bit images (maxval 255) are supported");
  if (!std::isspace(in.get())) throw FormatError("pgm: missing header terminator");
  std::vector<unsigned char> raw(w * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError("pgm: truncated pixel data");
  ImageBuffer img(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i];
  return img;
}

void write_pgm(std::ostream& out, const ImageBuffer& img) {
  const auto bytes = quantize(img);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImageBuffer load_pgm(const std::string& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  try {
    return read_pgm(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_pgm(const std::string& path, const ImageBuffer& img) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  write_pgm(out, img);
  finish(out, path);
}

std::vector<std::string> list_pgm_files(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  std::vector<std::string> out;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
    if (it->is_regular_file() && it->path().extension() == ".pgm") out.push_back(it->path().string());
  if (ec) throw FormatError("cannot list " + dir + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

PatchMatrix image_patches(const ImageBuffer& img, std::size_t edge, std::size_t stride) {
  if (edge == 0 || stride == 0) throw std::invalid_argument("patch edge and stride must be positive");
  if (img.width < edge || img.height < edge) return PatchMatrix(static_cast<Eigen::Index>(edge * edge), 0);
  const std::size_t nx = (img.width - edge) / stride + 1, ny = (img.height - edge) / stride + 1;
  PatchMatrix z(static_cast<Eigen::Index>(edge * edge), static_cast<Eigen::Index>(nx * ny));
  Eigen::Index c = 0;
  for (std::size_t by = 0; by < ny; ++by)
    for (std::size_t bx = 0; bx < nx; ++bx, ++c) {
      auto col = z.col(c);
      Eigen::Index j = 0;
      for (std::size_t dy = 0; dy < edge; ++dy)
        for (std::size_t dx = 0; dx < edge; ++dx) col[j++] = img.at(bx * stride + dx, by * stride + dy);
      col.array() -= col.mean();
    }
  return z;
}

PatchMatrix load_training_patches(const std::string& source, std::size_t edge,
                                  std::size_t stride, std::uint64_t seed) {
  if (!std::filesystem::is_directory(source)) {
    PatchMatrix z = load_patches(source);
    if (static_cast<std::size_t>(z.rows()) != edge * edge)
      throw FormatError(source + ": patch length does not match the patch size");
    return z;
  }
  const auto files = list_pgm_files(source);
  if (files.empty()) throw FormatError("no .pgm images in " + source);
  std::vector<PatchMatrix> parts;
  Eigen::Index total = 0;
  for (const auto& f : files) {
    parts.push_back(image_patches(load_pgm(f), edge, stride));
    total += parts.back().cols();
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 eng(seed);
  std::shuffle(order.begin(), order.end(), eng);
  PatchMatrix all(static_cast<Eigen::Index>(edge * edge), total);
  Eigen::Index c = 0;
  for (const auto& part : parts) {
    all.middleCols(c, part.cols()) = part;
    c += part.cols();
  }
  PatchMatrix out(all.rows(), total);
  for (Eigen::Index i = 0; i < total; ++i) out.col(i) = all.col(order[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace ggmm
