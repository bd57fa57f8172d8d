#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/nn/tape.hpp"
#include "fast/nn/tensor.hpp"

namespace fast::nn {

static_assert(std::endian::native == std::endian::little,
              "binary containers are written in native little-endian order");

namespace io {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("unexpected end of stream");
  return v;
}

inline void put_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

inline void get_doubles(std::istream& is, std::span<double> v) {
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
  if (!is) throw std::runtime_error("unexpected end of stream");
}

}  // namespace io

/// Named, ordered collection of parameter tensors.
///
/// Binary layout (all integers little-endian):
///   "FSTP" | u32 version=1 | u32 count |
///   count x { u32 name_len | name | u32 rank | rank x u64 dim | doubles }
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor value) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(value)});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t size() const noexcept { return entries_.size(); }

  Tensor& operator[](const std::string& name) { return entries_.at(lookup(name)).value; }
  const Tensor& operator[](const std::string& name) const { return entries_.at(lookup(name)).value; }

  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  Tensor& at(std::size_t i) { return entries_.at(i).value; }
  const Tensor& at(std::size_t i) const { return entries_.at(i).value; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

  void save(std::ostream& os) const {
    os.write("FSTP", 4);
    io::put<std::uint32_t>(os, 1);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
      io::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
      os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      io::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.rank()));
      for (auto d : e.value.shape()) io::put<std::uint64_t>(os, d);
      io::put_doubles(os, e.value.data());
    }
  }

  static ParamSet load(std::istream& is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FSTP", 4) != 0) throw std::runtime_error("not a parameter file");
    if (io::get<std::uint32_t>(is) != 1) throw std::runtime_error("unsupported parameter file version");
    const auto count = io::get<std::uint32_t>(is);
    ParamSet ps;
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name(io::get<std::uint32_t>(is), '\0');
      is.read(name.data(), static_cast<std::streamsize>(name.size()));
      Shape shape(io::get<std::uint32_t>(is));
      for (auto& d : shape) d = io::get<std::uint64_t>(is);
      Tensor t(shape);
      io::get_doubles(is, t.data());
      ps.add(name, std::move(t));
    }
    return ps;
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    save(os);
  }

  static ParamSet load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return load(is);
  }

  std::string bytes() const {
    std::ostringstream os(std::ios::binary);
    save(os);
    return os.str();
  }

 private:
  struct Entry {
    std::string name;
    Tensor value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Tape leaves for every parameter of a set, in set order.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamSet& params, bool trainable) : params_(&params) {
    vars_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      vars_.push_back(trainable ? tape.variable(params.at(i)) : tape.constant(params.at(i)));
    }
  }

  const Var& operator[](const std::string& name) const {
    for (std::size_t i = 0; i < params_->size(); ++i) {
      if (params_->name(i) == name) return vars_[i];
    }
    throw std::out_of_range("unknown parameter: " + name);
  }

  const std::vector<Var>& vars() const noexcept { return vars_; }

 private:
  const ParamSet* params_;
  std::vector<Var> vars_;
};

// Initializers -------------------------------------------------------------

/// Uniform on +-sqrt(6 / fan_in) (Kaiming-uniform for ReLU networks).
inline Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = bound * u(rng);
  return t;
}

/// Uniform on +-1/sqrt(fan_in).
inline Tensor simple_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = bound * u(rng);
  return t;
}

/// Gradients keyed like a ParamSet (same order, same shapes).
using GradSet = std::vector<Tensor>;

inline GradSet zero_grads(const ParamSet& params) {
  GradSet g;
  g.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.push_back(Tensor::zeros_like(params.at(i)));
  return g;
}

/// Adds d(loss)/d(param) from a finished backward pass into `acc`.
inline void accumulate_grads(const Tape& tape, const BoundParams& bound, GradSet& acc) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += tape.grad(bound.vars()[i]);
}

}  // namespace fast::nn
