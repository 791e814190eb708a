#pragma once

// Monte Carlo ensembles over independent trajectories.
//
// Statistics are kept as exact fixed-point integer sums, so merging partial
// accumulators is associative and commutative bit for bit: the result does
// not depend on worker count, scheduling or checkpoint boundaries.

#include <zlib.h>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include "nuhops/oracles.hpp"

namespace nuhops {

class EnsembleAccumulator {
public:
    static constexpr int kValueBits = 56;   // resolution 2^-56 for values
    static constexpr int kSquareBits = 40;  // resolution 2^-40 for |x|^2
    static constexpr double kValueCap = 17592186044416.0;    // 2^44
    static constexpr double kSquareCap = 1152921504606846976.0;  // 2^60

    EnsembleAccumulator() = default;
    explicit EnsembleAccumulator(std::size_t cells) : re_(cells), im_(cells), sq_(cells) {}

    std::size_t cells() const { return re_.size(); }
    std::uint64_t count() const { return count_; }

    void add(std::span<const cplx> row) {
        if (row.size() != cells()) throw Error("accumulator: row size mismatch");
        for (std::size_t k = 0; k < row.size(); ++k) {
            re_[k] += quantize(row[k].real(), kValueBits, kValueCap);
            im_[k] += quantize(row[k].imag(), kValueBits, kValueCap);
            sq_[k] += quantize(std::norm(row[k]), kSquareBits, kSquareCap);
        }
        ++count_;
    }

    void merge(const EnsembleAccumulator& o) {
        if (o.cells() != cells()) throw Error("accumulator: merge size mismatch");
        for (std::size_t k = 0; k < cells(); ++k) {
            re_[k] += o.re_[k];
            im_[k] += o.im_[k];
            sq_[k] += o.sq_[k];
        }
        count_ += o.count_;
    }

    cplx mean(std::size_t k) const {
        if (count_ == 0) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
        return {std::ldexp(double(re_[k]), -kValueBits) / double(count_),
                std::ldexp(double(im_[k]), -kValueBits) / double(count_)};
    }

    // sqrt(sample variance / n) of the complex value; NaN for n < 2.
    double stderr_of(std::size_t k) const {
        if (count_ < 2) return std::numeric_limits<double>::quiet_NaN();
        const double n = double(count_);
        const double m2 = std::ldexp(double(sq_[k]), -kSquareBits) / n;
        const double var = std::max(0.0, m2 - std::norm(mean(k))) * n / (n - 1.0);
        return std::sqrt(var / n);
    }

    bool operator==(const EnsembleAccumulator& o) const {
        return count_ == o.count_ && re_ == o.re_ && im_ == o.im_ && sq_ == o.sq_;
    }

    // raw access for serialization
    std::vector<__int128>& re_sums() { return re_; }
    std::vector<__int128>& im_sums() { return im_; }
    std::vector<__int128>& sq_sums() { return sq_; }
    const std::vector<__int128>& re_sums() const { return re_; }
    const std::vector<__int128>& im_sums() const { return im_; }
    const std::vector<__int128>& sq_sums() const { return sq_; }
    void set_count(std::uint64_t n) { count_ = n; }

private:
    static __int128 quantize(double x, int bits, double cap) {
        if (!std::isfinite(x) || std::abs(x) > cap)
            throw NumericalError("accumulator: value outside the representable range");
        return static_cast<__int128>(std::nearbyint(std::ldexp(x, bits)));
    }

    std::vector<__int128> re_, im_, sq_;
    std::uint64_t count_ = 0;
};

struct TrajectoryEvent {
    std::uint64_t index = 0;
    std::uint32_t attempt = 0;
    std::string message;
};

// Where each trajectory's drive comes from.
struct NoiseSource {
    enum class Kind { generated, fixed } kind = Kind::generated;
    NoisePath fixed;   // designed or injected path, shared by all trajectories
};

struct EnsembleConfig {
    std::uint64_t trajectories = 1;
    std::uint64_t master_seed = 1;
    unsigned workers = 1;
    double t_end = 1.0;
    std::uint64_t checkpoint_every = 0;   // 0: no checkpoints
    std::filesystem::path checkpoint_path;
    bool resume = false;
    std::uint64_t model_hash = 0;
    unsigned max_attempts = 4;
};

struct EnsembleResult {
    std::vector<double> times;
    EnsembleAccumulator acc;              // records x columns, then fields
    std::vector<EnsembleAccumulator> blocks;  // moment columns only, for jackknife
    std::vector<TrajectoryEvent> failures;
    std::vector<TrajectoryEvent> resamples;
    std::uint64_t completed = 0;
    std::size_t field_record = 0;
    double wall_seconds = 0.0;
    int max_fock_seen = 0;
    int max_window_seen = 0;
};

inline std::size_t jackknife_blocks(std::uint64_t m) { return std::size_t(std::min<std::uint64_t>(20, m)); }
inline std::size_t block_of(std::uint64_t i, std::uint64_t m, std::size_t b) {
    return std::size_t((i * b) / m);
}

// --- checkpoint I/O -------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'N', 'U', 'H', 'Z', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

struct ByteWriter {
    std::string buf;
    template <class T>
    void put(T v) {
        auto u = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        if constexpr (std::endian::native == std::endian::big) std::reverse(u.begin(), u.end());
        buf.append(reinterpret_cast<const char*>(u.data()), sizeof(T));
    }
    void put_i128(__int128 v) {
        put<std::uint64_t>(std::uint64_t(static_cast<unsigned __int128>(v)));
        put<std::uint64_t>(std::uint64_t(static_cast<unsigned __int128>(v) >> 64));
    }
    void put_str(const std::string& s) {
        put<std::uint32_t>(std::uint32_t(s.size()));
        buf += s;
    }
};

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    template <class T>
    T get() {
        if (pos + sizeof(T) > buf.size()) throw Error("checkpoint: truncated file");
        std::array<unsigned char, sizeof(T)> u;
        std::memcpy(u.data(), buf.data() + pos, sizeof(T));
        pos += sizeof(T);
        if constexpr (std::endian::native == std::endian::big) std::reverse(u.begin(), u.end());
        return std::bit_cast<T>(u);
    }
    __int128 get_i128() {
        const auto lo = get<std::uint64_t>();
        const auto hi = get<std::uint64_t>();
        return static_cast<__int128>((static_cast<unsigned __int128>(hi) << 64) | lo);
    }
    std::string get_str() {
        const auto n = get<std::uint32_t>();
        if (pos + n > buf.size()) throw Error("checkpoint: truncated file");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

inline void put_acc(ByteWriter& w, const EnsembleAccumulator& a) {
    w.put<std::uint64_t>(a.cells());
    w.put<std::uint64_t>(a.count());
    for (std::size_t k = 0; k < a.cells(); ++k) {
        w.put_i128(a.re_sums()[k]);
        w.put_i128(a.im_sums()[k]);
        w.put_i128(a.sq_sums()[k]);
    }
}

inline EnsembleAccumulator get_acc(ByteReader& r) {
    const auto cells = r.get<std::uint64_t>();
    if (cells > (std::uint64_t(1) << 36)) throw Error("checkpoint: implausible accumulator size");
    EnsembleAccumulator a(cells);
    a.set_count(r.get<std::uint64_t>());
    for (std::size_t k = 0; k < cells; ++k) {
        a.re_sums()[k] = r.get_i128();
        a.im_sums()[k] = r.get_i128();
        a.sq_sums()[k] = r.get_i128();
    }
    return a;
}

inline void put_events(ByteWriter& w, const std::vector<TrajectoryEvent>& ev) {
    w.put<std::uint64_t>(ev.size());
    for (const auto& e : ev) {
        w.put<std::uint64_t>(e.index);
        w.put<std::uint32_t>(e.attempt);
        w.put_str(e.message);
    }
}

inline std::vector<TrajectoryEvent> get_events(ByteReader& r) {
    std::vector<TrajectoryEvent> ev(r.get<std::uint64_t>());
    for (auto& e : ev) {
        e.index = r.get<std::uint64_t>();
        e.attempt = r.get<std::uint32_t>();
        e.message = r.get_str();
    }
    return ev;
}

}  // namespace detail

struct Checkpoint {
    std::uint64_t model_hash = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t completed = 0;
    EnsembleAccumulator acc;
    std::vector<EnsembleAccumulator> blocks;
    std::vector<TrajectoryEvent> failures;
    std::vector<TrajectoryEvent> resamples;
};

inline void checkpoint_save(const std::filesystem::path& path, const Checkpoint& c) {
    detail::ByteWriter w;
    w.buf.append(kCheckpointMagic, 8);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(c.model_hash);
    w.put<std::uint64_t>(c.master_seed);
    w.put<std::uint64_t>(c.completed);
    detail::put_acc(w, c.acc);
    w.put<std::uint64_t>(c.blocks.size());
    for (const auto& b : c.blocks) detail::put_acc(w, b);
    detail::put_events(w, c.failures);
    detail::put_events(w, c.resamples);
    const auto crc = std::uint32_t(::crc32(0L, reinterpret_cast<const Bytef*>(w.buf.data()), uInt(w.buf.size())));
    w.put<std::uint32_t>(crc);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("checkpoint: cannot write " + tmp.string());
        os.write(w.buf.data(), std::streamsize(w.buf.size()));
        if (!os) throw Error("checkpoint: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// Loads and validates a checkpoint; the hash and seed must match the run.
inline Checkpoint checkpoint_load(const std::filesystem::path& path, std::uint64_t model_hash,
                                  std::uint64_t master_seed) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("checkpoint: cannot open " + path.string());
    const std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 + 4 + 24 + 4 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
        throw Error("checkpoint: bad magic in " + path.string());
    std::uint32_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
    if constexpr (std::endian::native == std::endian::big) stored = __builtin_bswap32(stored);
    const auto crc = std::uint32_t(::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size() - 4)));
    if (crc != stored) throw Error("checkpoint: checksum mismatch, file is corrupted");
    detail::ByteReader r{buf, 8};
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw Error("checkpoint: schema version " + std::to_string(version) + " is not supported");
    Checkpoint c;
    c.model_hash = r.get<std::uint64_t>();
    c.master_seed = r.get<std::uint64_t>();
    c.completed = r.get<std::uint64_t>();
    if (c.model_hash != model_hash) throw Error("checkpoint: model hash does not match this configuration");
    if (c.master_seed != master_seed) throw Error("checkpoint: master seed does not match this run");
    c.acc = detail::get_acc(r);
    c.blocks.resize(r.get<std::uint64_t>());
    for (auto& b : c.blocks) b = detail::get_acc(r);
    c.failures = detail::get_events(r);
    c.resamples = detail::get_events(r);
    return c;
}

// --- ensemble driver --------------------------------------------------------

class EnsembleRunner {
public:
    EnsembleRunner(ModelSpec model, PropagatorConfig pcfg, ObservableRequest req, NoiseSource noise = {})
        : model_(std::move(model)),
          pcfg_(std::move(pcfg)),
          layout_(model_, pcfg_.mode, std::move(req)),
          noise_(std::move(noise)) {
        model_.validate(noise_.kind == NoiseSource::Kind::generated);
        pcfg_.validate(model_.terms());
    }

    const ObservableLayout& layout() const { return layout_; }
    const ModelSpec& model() const { return model_; }
    const PropagatorConfig& propagator_config() const { return pcfg_; }

    std::size_t n_steps(double t_end) const {
        const double n = t_end / pcfg_.dt;
        const auto k = std::size_t(std::llround(n));
        if (k == 0 || std::abs(n - double(k)) > 1e-6 * std::max(1.0, n))
            throw ConfigError("propagator.t_end: must be a positive multiple of dt");
        return k;
    }

    std::vector<double> record_times(double t_end) const {
        const std::size_t n = n_steps(t_end), s = layout_.request().stride;
        std::vector<double> t;
        for (std::size_t k = 0; k <= n; k += s) t.push_back(double(k) * pcfg_.dt);
        return t;
    }

    std::size_t field_record(double t_end) const {
        const auto t = record_times(t_end);
        double want = t.back();
        if (layout_.request().spinq) want = layout_.request().spinq->time;
        else if (layout_.request().husimi) want = layout_.request().husimi->time;
        std::size_t best = 0;
        for (std::size_t k = 0; k < t.size(); ++k)
            if (std::abs(t[k] - want) < std::abs(t[best] - want)) best = k;
        return best;
    }

    std::size_t cells(double t_end) const {
        return record_times(t_end).size() * layout_.columns() + layout_.field_size();
    }

    // Noise for trajectory i, attempt a.
    NoisePath noise_for(std::uint64_t seed, std::uint64_t i, std::uint32_t attempt, std::size_t steps) const {
        if (noise_.kind == NoiseSource::Kind::fixed) return noise_.fixed;
        KeyedStream rng(seed, i, StreamPurpose::noise, attempt);
        NoisePath p = generate_path(model_.bcf, pcfg_.dt, steps, rng);
        p.seed = rng.key();
        return p;
    }

    std::optional<NoisePath> thermal_for(std::uint64_t seed, std::uint64_t i, std::uint32_t attempt,
                                         std::size_t steps) const {
        if (!model_.thermal) return std::nullopt;
        KeyedStream rng(seed, i, StreamPurpose::thermal, attempt);
        return generate_thermal_path(*model_.thermal, pcfg_.dt, steps, rng);
    }

    struct TrajectoryOutput {
        std::vector<cplx> row;
        TrajectoryState final_state;
    };

    // Runs one trajectory with the given drive and fills the record row.
    TrajectoryOutput run_one(const Propagator& prop, const NoisePath& noise, const NoisePath* thermal,
                             double t_end, const std::function<void(const TrajectoryState&)>& extra = {}) const {
        const std::size_t steps = n_steps(t_end), stride = layout_.request().stride;
        const std::size_t cols = layout_.columns();
        const std::size_t frec = field_record(t_end);
        TrajectoryOutput out;
        out.row.assign(cells(t_end), cplx{0.0});
        const std::size_t field_off = record_times(t_end).size() * cols;
        auto observe = [&](const TrajectoryState& st) {
            const std::size_t r = st.step / stride;
            layout_.evaluate(st, out.row.data() + r * cols);
            if (layout_.field_size() > 0 && r == frec) layout_.evaluate_fields(st, out.row.data() + field_off);
            if (extra) extra(st);
        };
        out.final_state = run_trajectory(prop, noise, thermal, steps, stride, observe);
        return out;
    }

    // Called from worker threads with (trajectory index, record row) for every
    // accepted trajectory; the callee synchronizes.
    using TrajectoryHook = std::function<void(std::uint64_t, const std::vector<cplx>&)>;

    EnsembleResult run(const EnsembleConfig& cfg, const std::function<void(const std::string&)>& log = {},
                       const TrajectoryHook& on_trajectory = {}) const {
        if (cfg.trajectories == 0) throw ConfigError("ensemble.trajectories: must be >= 1");
        const auto t0 = std::chrono::steady_clock::now();
        const std::size_t steps = n_steps(cfg.t_end);
        EnsembleResult res;
        res.times = record_times(cfg.t_end);
        res.field_record = field_record(cfg.t_end);
        const std::size_t ncell = cells(cfg.t_end);
        const std::size_t nblocks = layout_.has_c3() ? jackknife_blocks(cfg.trajectories) : 0;
        const std::size_t mcells = res.times.size() * moment_names().size();
        res.acc = EnsembleAccumulator(ncell);
        res.blocks.assign(nblocks, EnsembleAccumulator(mcells));

        if (cfg.resume && !cfg.checkpoint_path.empty() && std::filesystem::exists(cfg.checkpoint_path)) {
            Checkpoint c = checkpoint_load(cfg.checkpoint_path, cfg.model_hash, cfg.master_seed);
            if (c.acc.cells() != ncell || c.blocks.size() != nblocks)
                throw Error("checkpoint: layout does not match this configuration");
            res.acc = std::move(c.acc);
            res.blocks = std::move(c.blocks);
            res.failures = std::move(c.failures);
            res.resamples = std::move(c.resamples);
            res.completed = c.completed;
            if (log) log("resumed from checkpoint at trajectory " + std::to_string(res.completed));
        }

        const std::uint64_t chunk = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : cfg.trajectories;
        while (res.completed < cfg.trajectories) {
            const std::uint64_t end = std::min(cfg.trajectories, res.completed + chunk);
            run_range(cfg, steps, res, res.completed, end, on_trajectory);
            res.completed = end;
            if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty()) {
                Checkpoint c{cfg.model_hash, cfg.master_seed, res.completed, res.acc, res.blocks, res.failures,
                             res.resamples};
                checkpoint_save(cfg.checkpoint_path, c);
                if (log) log("checkpoint after " + std::to_string(res.completed) + " trajectories");
            }
        }
        res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return res;
    }

private:
    void run_range(const EnsembleConfig& cfg, std::size_t steps, EnsembleResult& res, std::uint64_t begin,
                   std::uint64_t end, const TrajectoryHook& on_trajectory) const {
        const unsigned nw = std::max(1u, std::min<unsigned>(cfg.workers ? cfg.workers : 1u,
                                                            unsigned(std::max<std::uint64_t>(1, end - begin))));
        std::atomic<std::uint64_t> next{begin};
        std::atomic<bool> stop{false};
        std::mutex mu;
        std::exception_ptr fatal;
        const std::size_t ncell = res.acc.cells();
        const std::size_t nblocks = res.blocks.size();
        const std::size_t nrec = res.times.size();
        const std::size_t cols = layout_.columns();
        const std::size_t mcol = layout_.moment_column().value_or(0);
        const std::size_t nm = moment_names().size();

        struct Local {
            EnsembleAccumulator acc;
            std::vector<EnsembleAccumulator> blocks;
            std::vector<TrajectoryEvent> failures, resamples;
            int max_fock = 0, max_window = 0;
        };
        std::vector<Local> locals(nw);

        auto worker = [&](unsigned w) {
            Local& L = locals[w];
            L.acc = EnsembleAccumulator(ncell);
            L.blocks.assign(nblocks, EnsembleAccumulator(nrec * nm));
            const Propagator prop(model_, pcfg_);
            std::vector<cplx> mrow(nrec * nm);
            while (!stop.load()) {
                const std::uint64_t i = next.fetch_add(1);
                if (i >= end) break;
                try {
                    for (std::uint32_t attempt = 0;; ++attempt) {
                        try {
                            const NoisePath noise = noise_for(cfg.master_seed, i, attempt, steps);
                            const auto thermal = thermal_for(cfg.master_seed, i, attempt, steps);
                            auto out = run_one(prop, noise, thermal ? &*thermal : nullptr, cfg.t_end);
                            L.acc.add(out.row);
                            if (on_trajectory) on_trajectory(i, out.row);
                            if (nblocks > 0) {
                                for (std::size_t r = 0; r < nrec; ++r)
                                    for (std::size_t k = 0; k < nm; ++k) mrow[r * nm + k] = out.row[r * cols + mcol + k];
                                L.blocks[block_of(i, cfg.trajectories, nblocks)].add(mrow);
                            }
                            L.max_fock = std::max(L.max_fock, out.final_state.max_fock_seen);
                            L.max_window = std::max(L.max_window, out.final_state.max_window_seen);
                            break;
                        } catch (const DegenerateTrajectory& e) {
                            L.resamples.push_back({i, attempt, e.what()});
                            if (noise_.kind == NoiseSource::Kind::fixed || attempt + 1 >= cfg.max_attempts) {
                                L.failures.push_back({i, attempt, std::string("degenerate: ") + e.what()});
                                break;
                            }
                        }
                    }
                } catch (const TruncationCapError&) {
                    std::lock_guard lock(mu);
                    if (!fatal) fatal = std::current_exception();
                    stop = true;
                } catch (const std::exception& e) {
                    L.failures.push_back({i, 0, e.what()});
                }
            }
        };

        if (nw == 1) {
            worker(0);
        } else {
            std::vector<std::thread> threads;
            for (unsigned w = 0; w < nw; ++w) threads.emplace_back(worker, w);
            for (auto& t : threads) t.join();
        }
        if (fatal) std::rethrow_exception(fatal);

        for (auto& L : locals) {
            res.acc.merge(L.acc);
            for (std::size_t b = 0; b < nblocks; ++b) res.blocks[b].merge(L.blocks[b]);
            res.failures.insert(res.failures.end(), L.failures.begin(), L.failures.end());
            res.resamples.insert(res.resamples.end(), L.resamples.begin(), L.resamples.end());
            res.max_fock_seen = std::max(res.max_fock_seen, L.max_fock);
            res.max_window_seen = std::max(res.max_window_seen, L.max_window);
        }
        const auto by_index = [](const TrajectoryEvent& a, const TrajectoryEvent& b) {
            return std::tie(a.index, a.attempt) < std::tie(b.index, b.attempt);
        };
        std::sort(res.failures.begin(), res.failures.end(), by_index);
        std::sort(res.resamples.begin(), res.resamples.end(), by_index);
    }

    ModelSpec model_;
    PropagatorConfig pcfg_;
    ObservableLayout layout_;
    NoiseSource noise_;
};

// C3 from accumulated moment means at record r.
inline CavityMoments moments_at(const EnsembleAccumulator& acc, std::size_t base) {
    CavityMoments m;
    m.a = acc.mean(base + 0);
    m.aa = acc.mean(base + 1);
    m.aaa = acc.mean(base + 2);
    m.ada = acc.mean(base + 3);
    m.adaa = acc.mean(base + 4);
    return m;
}

// Ensemble means as a Series; adds C3 with a delete-one-block jackknife.
// The C3 error is the sum of the complex jackknife errors of the two
// cumulants, which bounds the error of |k1| + |k2| by the triangle inequality
// and stays meaningful when the cumulants are close to zero.
inline Series ensemble_series(const EnsembleResult& res, const ObservableLayout& layout) {
    Series s;
    s.t = res.times;
    const std::size_t cols = layout.columns();
    for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t k = s.add_column(layout.names()[c]);
        for (std::size_t r = 0; r < s.t.size(); ++r) {
            s.value[k][r] = res.acc.mean(r * cols + c);
            s.stderr_[k][r] = res.acc.stderr_of(r * cols + c);
        }
    }
    if (layout.has_c3()) {
        const std::size_t mcol = *layout.moment_column();
        const std::size_t nm = moment_names().size();
        const std::size_t k = s.add_column("C3");
        const std::size_t B = res.blocks.size();
        for (std::size_t r = 0; r < s.t.size(); ++r) {
            s.value[k][r] = c3(moments_at(res.acc, r * cols + mcol));
            if (B < 2) continue;
            // cumulants without block b, from the total minus the block
            std::vector<std::pair<cplx, cplx>> jk(B);
            cplx m1 = 0.0, m2 = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                EnsembleAccumulator rest(nm);
                for (std::size_t q = 0; q < nm; ++q) {
                    rest.re_sums()[q] = res.acc.re_sums()[r * cols + mcol + q] - res.blocks[b].re_sums()[r * nm + q];
                    rest.im_sums()[q] = res.acc.im_sums()[r * cols + mcol + q] - res.blocks[b].im_sums()[r * nm + q];
                }
                rest.set_count(res.acc.count() - res.blocks[b].count());
                if (rest.count() > 0) jk[b] = third_cumulants(moments_at(rest, 0));
                m1 += jk[b].first;
                m2 += jk[b].second;
            }
            m1 /= double(B);
            m2 /= double(B);
            double v1 = 0.0, v2 = 0.0;
            for (const auto& [x1, x2] : jk) {
                v1 += std::norm(x1 - m1);
                v2 += std::norm(x2 - m2);
            }
            const double f = double(B - 1) / double(B);
            s.stderr_[k][r] = std::sqrt(v1 * f) + std::sqrt(v2 * f);
        }
    }
    return s;
}

inline std::vector<double> ensemble_field(const EnsembleResult& res, const ObservableLayout& layout) {
    const std::size_t off = res.times.size() * layout.columns();
    std::vector<double> f(layout.field_size());
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = res.acc.mean(off + k).real();
    return f;
}

}  // namespace nuhops
