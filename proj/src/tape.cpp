#include "capnet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "capnet/errors.hpp"

namespace capnet::ad {

const Tensor& Value::val() const { return tape->value(id); }

Value Tape::make(Tensor v, bool needs_grad) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::set_back(Value v, std::function<void(Tape&)> back) {
    nodes_[v.id].back = std::move(back);
}

Value Tape::param(Parameter& p) {
    Value v = make(p.value, true);
    bound_.emplace_back(v.id, &p);
    return v;
}

Tensor& Tape::grad(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

Tensor Tape::grad_of(Value v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.empty()) return Tensor::zeros(n.value.shape());
    return n.grad;
}

void Tape::backward(Value loss) {
    if (loss.val().size() != 1) {
        throw DimensionError("backward expects a scalar loss, got " + shape_str(loss.val().shape()));
    }
    grad(loss.id)[0] = 1.0;
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.back && !n.grad.empty()) n.back(*this);
    }
    for (auto& [id, p] : bound_) {
        const Node& n = nodes_[id];
        if (n.grad.empty()) continue;
        for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
}

void Tape::clear() {
    nodes_.clear();
    bound_.clear();
}

namespace {

bool any_grad(Tape& t, std::initializer_list<Value> vs) {
    for (const Value& v : vs) {
        if (t.needs_grad(v.id)) return true;
    }
    return false;
}

}  // namespace

Value matmul(Value a, Value b) {
    Tape& t = *a.tape;
    Tensor y = capnet::matmul(a.val(), b.val());
    const bool ng = any_grad(t, {a, b});
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, bid = b.id, oid = out.id](Tape& t) {
        const Tensor& av = t.value(aid);
        const Tensor& bv = t.value(bid);
        const Tensor& gy = t.grad(oid);
        if (av.rank() == 2 && bv.rank() == 2) {
            if (t.needs_grad(aid)) t.grad(aid).mat().noalias() += gy.mat() * bv.mat().transpose();
            if (t.needs_grad(bid)) t.grad(bid).mat().noalias() += av.mat().transpose() * gy.mat();
        } else if (av.rank() == 2 && bv.rank() == 1) {
            if (t.needs_grad(aid)) t.grad(aid).mat().noalias() += gy.vec() * bv.vec().transpose();
            if (t.needs_grad(bid)) t.grad(bid).vec().noalias() += av.mat().transpose() * gy.vec();
        } else {  // rank1 x rank2
            if (t.needs_grad(aid)) t.grad(aid).vec().noalias() += bv.mat() * gy.vec();
            if (t.needs_grad(bid)) t.grad(bid).mat().noalias() += av.vec() * gy.vec().transpose();
        }
    });
    return out;
}

Value add(Value a, Value b) {
    Tape& t = *a.tape;
    if (!a.val().same_shape(b.val())) {
        throw DimensionError("add shape mismatch: " + shape_str(a.val().shape()) + " vs " +
                             shape_str(b.val().shape()));
    }
    Tensor y(a.val().shape());
    y.vec() = a.val().vec() + b.val().vec();
    const bool ng = any_grad(t, {a, b});
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, bid = b.id, oid = out.id](Tape& t) {
        const Tensor& gy = t.grad(oid);
        if (t.needs_grad(aid)) t.grad(aid).vec() += gy.vec();
        if (t.needs_grad(bid)) t.grad(bid).vec() += gy.vec();
    });
    return out;
}

Value sub(Value a, Value b) { return add(a, scale(b, -1.0)); }

Value mul(Value a, Value b) {
    Tape& t = *a.tape;
    if (!a.val().same_shape(b.val())) {
        throw DimensionError("mul shape mismatch: " + shape_str(a.val().shape()) + " vs " +
                             shape_str(b.val().shape()));
    }
    Tensor y(a.val().shape());
    y.vec() = a.val().vec().cwiseProduct(b.val().vec());
    const bool ng = any_grad(t, {a, b});
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, bid = b.id, oid = out.id](Tape& t) {
        const Tensor& gy = t.grad(oid);
        if (t.needs_grad(aid)) t.grad(aid).vec() += gy.vec().cwiseProduct(t.value(bid).vec());
        if (t.needs_grad(bid)) t.grad(bid).vec() += gy.vec().cwiseProduct(t.value(aid).vec());
    });
    return out;
}

Value scale(Value a, double c) {
    Tape& t = *a.tape;
    Tensor y(a.val().shape());
    y.vec() = a.val().vec() * c;
    const bool ng = t.needs_grad(a.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, oid = out.id, c](Tape& t) {
        t.grad(aid).vec() += t.grad(oid).vec() * c;
    });
    return out;
}

Value mul_scalar(Value a, Value s) {
    Tape& t = *a.tape;
    if (s.val().size() != 1) throw DimensionError("mul_scalar expects a single-element scalar");
    Tensor y(a.val().shape());
    y.vec() = a.val().vec() * s.val()[0];
    const bool ng = any_grad(t, {a, s});
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, sid = s.id, oid = out.id](Tape& t) {
        const Tensor& gy = t.grad(oid);
        if (t.needs_grad(aid)) t.grad(aid).vec() += gy.vec() * t.value(sid)[0];
        if (t.needs_grad(sid)) t.grad(sid)[0] += gy.vec().dot(t.value(aid).vec());
    });
    return out;
}

Value one_minus(Value a) {
    Tape& t = *a.tape;
    Tensor y(a.val().shape());
    y.vec() = 1.0 - a.val().vec().array();
    const bool ng = t.needs_grad(a.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, oid = out.id](Tape& t) {
        t.grad(aid).vec() -= t.grad(oid).vec();
    });
    return out;
}

Value concat(const std::vector<Value>& parts) {
    if (parts.empty()) throw DimensionError("concat of zero pieces");
    Tape& t = *parts[0].tape;
    std::size_t n = 0;
    bool ng = false;
    for (const Value& p : parts) {
        n += p.val().size();
        ng = ng || t.needs_grad(p.id);
    }
    Tensor y({n});
    std::size_t off = 0;
    for (const Value& p : parts) {
        std::copy(p.val().raw().begin(), p.val().raw().end(), y.raw().begin() + off);
        off += p.val().size();
    }
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    std::vector<std::uint32_t> ids;
    for (const Value& p : parts) ids.push_back(p.id);
    t.set_back(out, [ids, oid = out.id](Tape& t) {
        const Tensor& gy = t.grad(oid);
        std::size_t off = 0;
        for (std::uint32_t pid : ids) {
            const std::size_t len = t.value(pid).size();
            if (t.needs_grad(pid)) {
                Tensor& gp = t.grad(pid);
                for (std::size_t i = 0; i < len; ++i) gp[i] += gy[off + i];
            }
            off += len;
        }
    });
    return out;
}

Value slice(Value a, std::size_t begin, std::size_t len) {
    Tape& t = *a.tape;
    if (begin + len > a.val().size()) {
        throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
                             ") exceeds length " + std::to_string(a.val().size()));
    }
    Tensor y({len});
    std::copy(a.val().raw().begin() + begin, a.val().raw().begin() + begin + len, y.raw().begin());
    const bool ng = t.needs_grad(a.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, oid = out.id, begin, len](Tape& t) {
        const Tensor& gy = t.grad(oid);
        Tensor& ga = t.grad(aid);
        for (std::size_t i = 0; i < len; ++i) ga[begin + i] += gy[i];
    });
    return out;
}

Value elementwise(Value x, Elt mode) {
    Tape& t = *x.tape;
    Tensor y = capnet::elementwise(x.val(), mode);
    const bool ng = t.needs_grad(x.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [xid = x.id, oid = out.id, mode](Tape& t) {
        const Tensor& gy = t.grad(oid);
        const Tensor& xv = t.value(xid);
        const Tensor& yv = t.value(oid);
        Tensor& gx = t.grad(xid);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += gy[i] * elt_backward(xv[i], yv[i], mode);
        }
    });
    return out;
}

Value clamp(Value x, double lo, double hi) {
    Tape& t = *x.tape;
    Tensor y(x.val().shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(hi, std::max(lo, x.val()[i]));
    const bool ng = t.needs_grad(x.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [xid = x.id, oid = out.id, lo, hi](Tape& t) {
        const Tensor& gy = t.grad(oid);
        const Tensor& xv = t.value(xid);
        Tensor& gx = t.grad(xid);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] > lo && xv[i] < hi) gx[i] += gy[i];
        }
    });
    return out;
}

Value softmax(Value z) {
    Tape& t = *z.tape;
    Tensor y = capnet::softmax_vec(z.val());
    const bool ng = t.needs_grad(z.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [zid = z.id, oid = out.id](Tape& t) {
        const Tensor& gy = t.grad(oid);
        const Tensor& yv = t.value(oid);
        Tensor& gz = t.grad(zid);
        double s = 0.0;
        for (std::size_t i = 0; i < yv.size(); ++i) s += gy[i] * yv[i];
        for (std::size_t i = 0; i < yv.size(); ++i) gz[i] += yv[i] * (gy[i] - s);
    });
    return out;
}

Value cross_entropy_logits(Value logits, std::size_t target) {
    Tape& t = *logits.tape;
    const Tensor& z = logits.val();
    if (target >= z.size()) {
        throw DimensionError("cross-entropy target " + std::to_string(target) +
                             " out of range for " + std::to_string(z.size()) + " logits");
    }
    const double m = *std::max_element(z.raw().begin(), z.raw().end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += std::exp(z[i] - m);
    const double lse = m + std::log(sum);
    Value out = t.make(Tensor::scalar(lse - z[target]), t.needs_grad(logits.id));
    if (!t.needs_grad(logits.id)) return out;
    t.set_back(out, [zid = logits.id, oid = out.id, target, m, sum](Tape& t) {
        const double gl = t.grad(oid)[0];
        const Tensor& z = t.value(zid);
        Tensor& gz = t.grad(zid);
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double p = std::exp(z[i] - m) / sum;
            gz[i] += gl * (p - (i == target ? 1.0 : 0.0));
        }
    });
    return out;
}

Value sum(Value a) {
    Tape& t = *a.tape;
    Value out = t.make(Tensor::scalar(a.val().vec().sum()), t.needs_grad(a.id));
    if (!t.needs_grad(a.id)) return out;
    t.set_back(out, [aid = a.id, oid = out.id](Tape& t) {
        t.grad(aid).vec().array() += t.grad(oid)[0];
    });
    return out;
}

Value mean(Value a) { return scale(sum(a), 1.0 / static_cast<double>(a.val().size())); }

Value dot(Value a, Value b) {
    Tape& t = *a.tape;
    if (a.val().size() != b.val().size()) {
        throw DimensionError("dot length mismatch: " + shape_str(a.val().shape()) + " vs " +
                             shape_str(b.val().shape()));
    }
    Value out = t.make(Tensor::scalar(a.val().vec().dot(b.val().vec())), any_grad(t, {a, b}));
    if (!t.needs_grad(out.id)) return out;
    t.set_back(out, [aid = a.id, bid = b.id, oid = out.id](Tape& t) {
        const double g = t.grad(oid)[0];
        if (t.needs_grad(aid)) t.grad(aid).vec() += g * t.value(bid).vec();
        if (t.needs_grad(bid)) t.grad(bid).vec() += g * t.value(aid).vec();
    });
    return out;
}

Value add_rows(Value m, Value v) {
    Tape& t = *m.tape;
    if (m.val().rank() != 2 || v.val().rank() != 1 || m.val().dim(1) != v.val().dim(0)) {
        throw DimensionError("add_rows shape mismatch: " + shape_str(m.val().shape()) + " vs " +
                             shape_str(v.val().shape()));
    }
    Tensor y(m.val().shape());
    y.mat() = m.val().mat().rowwise() + v.val().vec().transpose();
    const bool ng = any_grad(t, {m, v});
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [mid = m.id, vid = v.id, oid = out.id](Tape& t) {
        const Tensor& gy = t.grad(oid);
        if (t.needs_grad(mid)) t.grad(mid).vec() += gy.vec();
        if (t.needs_grad(vid)) t.grad(vid).vec() += gy.mat().colwise().sum().transpose();
    });
    return out;
}

Value embed_row(Value table, std::size_t row) {
    Tape& t = *table.tape;
    const Tensor& tab = table.val();
    if (tab.rank() != 2) throw DimensionError("embedding table must be rank 2");
    if (row >= tab.dim(0)) {
        throw DimensionError("embedding row " + std::to_string(row) + " out of range for " +
                             shape_str(tab.shape()));
    }
    const std::size_t d = tab.dim(1);
    Tensor y({d});
    std::copy(tab.raw().begin() + row * d, tab.raw().begin() + (row + 1) * d, y.raw().begin());
    const bool ng = t.needs_grad(table.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [tid = table.id, oid = out.id, row, d](Tape& t) {
        const Tensor& gy = t.grad(oid);
        Tensor& gt = t.grad(tid);
        for (std::size_t i = 0; i < d; ++i) gt[row * d + i] += gy[i];
    });
    return out;
}

Value reshape(Value a, std::vector<std::size_t> shape) {
    Tape& t = *a.tape;
    Tensor y = a.val().reshaped(shape);
    const bool ng = t.needs_grad(a.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, oid = out.id](Tape& t) {
        t.grad(aid).vec() += t.grad(oid).vec();
    });
    return out;
}

Value transpose(Value a) {
    Tape& t = *a.tape;
    if (a.val().rank() != 2) throw DimensionError("transpose expects rank 2");
    Tensor y({a.val().dim(1), a.val().dim(0)});
    y.mat() = a.val().mat().transpose();
    const bool ng = t.needs_grad(a.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [aid = a.id, oid = out.id](Tape& t) {
        t.grad(aid).mat() += t.grad(oid).mat().transpose();
    });
    return out;
}

// ---- spatial ops ----

namespace {

struct ConvDims {
    std::size_t c, h, w, o, kh, kw;
    int sh, sw, ph, pw;
    std::size_t oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& k, int sh, int sw, int ph, int pw) {
    if (x.rank() != 3 || k.rank() != 4) {
        throw DimensionError("conv2d expects input (c,h,w) and kernels (o,c,kh,kw), got " +
                             shape_str(x.shape()) + " and " + shape_str(k.shape()));
    }
    ConvDims d{};
    d.c = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.o = k.dim(0);
    d.kh = k.dim(2);
    d.kw = k.dim(3);
    d.sh = sh;
    d.sw = sw;
    d.ph = ph;
    d.pw = pw;
    if (k.dim(1) != d.c) {
        throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) +
                             " vs kernels " + shape_str(k.shape()));
    }
    if (sh < 1 || sw < 1) throw DimensionError("conv2d stride must be >= 1");
    if (d.h + 2 * static_cast<std::size_t>(ph) < d.kh ||
        d.w + 2 * static_cast<std::size_t>(pw) < d.kw) {
        throw DimensionError("conv2d kernel " + shape_str(k.shape()) +
                             " larger than padded input " + shape_str(x.shape()));
    }
    d.oh = (d.h + 2 * ph - d.kh) / sh + 1;
    d.ow = (d.w + 2 * pw - d.kw) / sw + 1;
    return d;
}

// cols: (oh*ow) x (c*kh*kw), zero-filled outside the input.
Tensor im2col(const Tensor& x, const ConvDims& d) {
    Tensor cols({d.oh * d.ow, d.c * d.kh * d.kw});
    for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
            double* row = cols.data() + (oy * d.ow + ox) * cols.dim(1);
            for (std::size_t ci = 0; ci < d.c; ++ci) {
                for (std::size_t ky = 0; ky < d.kh; ++ky) {
                    const long iy = static_cast<long>(oy) * d.sh - d.ph + static_cast<long>(ky);
                    double* dst = row + (ci * d.kh + ky) * d.kw;
                    if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
                    for (std::size_t kx = 0; kx < d.kw; ++kx) {
                        const long ix = static_cast<long>(ox) * d.sw - d.pw + static_cast<long>(kx);
                        if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                        dst[kx] = x.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_add(const Tensor& cols, const ConvDims& d, Tensor& gx) {
    for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const double* row = cols.data() + (oy * d.ow + ox) * cols.dim(1);
            for (std::size_t ci = 0; ci < d.c; ++ci) {
                for (std::size_t ky = 0; ky < d.kh; ++ky) {
                    const long iy = static_cast<long>(oy) * d.sh - d.ph + static_cast<long>(ky);
                    if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
                    const double* src = row + (ci * d.kh + ky) * d.kw;
                    for (std::size_t kx = 0; kx < d.kw; ++kx) {
                        const long ix = static_cast<long>(ox) * d.sw - d.pw + static_cast<long>(kx);
                        if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                        gx.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) += src[kx];
                    }
                }
            }
        }
    }
}

}  // namespace

Value conv2d(Value x, Value kernels, Value bias, int stride_h, int stride_w, int pad_h,
             int pad_w) {
    Tape& t = *x.tape;
    const ConvDims d = conv_dims(x.val(), kernels.val(), stride_h, stride_w, pad_h, pad_w);
    if (bias.val().rank() != 1 || bias.val().dim(0) != d.o) {
        throw DimensionError("conv2d bias must have one entry per output channel");
    }
    auto cols = std::make_shared<Tensor>(im2col(x.val(), d));
    Tensor y({d.o, d.oh, d.ow});
    {
        MatMap ymat(y.data(), static_cast<Eigen::Index>(d.o), static_cast<Eigen::Index>(d.oh * d.ow));
        ConstMatMap kmat(kernels.val().data(), static_cast<Eigen::Index>(d.o),
                         static_cast<Eigen::Index>(d.c * d.kh * d.kw));
        ymat.noalias() = kmat * cols->mat().transpose();
        ymat.colwise() += bias.val().vec();
    }
    const bool ng = any_grad(t, {x, kernels, bias});
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [xid = x.id, kid = kernels.id, bid = bias.id, oid = out.id, d, cols](Tape& t) {
        const Tensor& gy = t.grad(oid);
        ConstMatMap gymat(gy.data(), static_cast<Eigen::Index>(d.o),
                          static_cast<Eigen::Index>(d.oh * d.ow));
        if (t.needs_grad(kid)) {
            Tensor& gk = t.grad(kid);
            MatMap gkmat(gk.data(), static_cast<Eigen::Index>(d.o),
                         static_cast<Eigen::Index>(d.c * d.kh * d.kw));
            gkmat.noalias() += gymat * cols->mat();
        }
        if (t.needs_grad(bid)) {
            t.grad(bid).vec() += gymat.rowwise().sum();
        }
        if (t.needs_grad(xid)) {
            ConstMatMap kmat(t.value(kid).data(), static_cast<Eigen::Index>(d.o),
                             static_cast<Eigen::Index>(d.c * d.kh * d.kw));
            Tensor gcols({d.oh * d.ow, d.c * d.kh * d.kw});
            gcols.mat().noalias() = gymat.transpose() * kmat;
            col2im_add(gcols, d, t.grad(xid));
        }
    });
    return out;
}

Value maxpool2d(Value x, int win_h, int win_w, int stride_h, int stride_w) {
    Tape& t = *x.tape;
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw DimensionError("maxpool2d expects (c,h,w)");
    const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const std::size_t wh = static_cast<std::size_t>(win_h), ww = static_cast<std::size_t>(win_w);
    if (wh > h || ww > w) {
        throw DimensionError("pool window " + std::to_string(wh) + "x" + std::to_string(ww) +
                             " exceeds input " + shape_str(xv.shape()));
    }
    const std::size_t oh = (h - wh) / stride_h + 1;
    const std::size_t ow = (w - ww) / stride_w + 1;
    Tensor y({c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(c * oh * ow);
    std::size_t oi = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox, ++oi) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t ky = 0; ky < wh; ++ky) {
                    for (std::size_t kx = 0; kx < ww; ++kx) {
                        const std::size_t iy = oy * stride_h + ky;
                        const std::size_t ix = ox * stride_w + kx;
                        const std::size_t idx = (ci * h + iy) * w + ix;
                        if (xv[idx] > best) {  // first occurrence wins ties
                            best = xv[idx];
                            best_idx = idx;
                        }
                    }
                }
                y[oi] = best;
                (*argmax)[oi] = best_idx;
            }
        }
    }
    const bool ng = t.needs_grad(x.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [xid = x.id, oid = out.id, argmax](Tape& t) {
        const Tensor& gy = t.grad(oid);
        Tensor& gx = t.grad(xid);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[(*argmax)[i]] += gy[i];
    });
    return out;
}

Value adaptive_avg_pool(Value x, std::size_t out_h, std::size_t out_w) {
    Tape& t = *x.tape;
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw DimensionError("adaptive_avg_pool expects (c,h,w)");
    const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (out_h > h || out_w > w) {
        throw DimensionError("adaptive_avg_pool target exceeds input " + shape_str(xv.shape()));
    }
    auto lo = [](std::size_t i, std::size_t n, std::size_t m) { return (i * n) / m; };
    auto hi = [](std::size_t i, std::size_t n, std::size_t m) { return ((i + 1) * n + m - 1) / m; };
    Tensor y({c, out_h, out_w});
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const std::size_t y0 = lo(oy, h, out_h), y1 = hi(oy, h, out_h);
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const std::size_t x0 = lo(ox, w, out_w), x1 = hi(ox, w, out_w);
                double s = 0.0;
                for (std::size_t iy = y0; iy < y1; ++iy) {
                    for (std::size_t ix = x0; ix < x1; ++ix) s += xv.at(ci, iy, ix);
                }
                y.at(ci, oy, ox) = s / static_cast<double>((y1 - y0) * (x1 - x0));
            }
        }
    }
    const bool ng = t.needs_grad(x.id);
    Value out = t.make(std::move(y), ng);
    if (!ng) return out;
    t.set_back(out, [xid = x.id, oid = out.id, c, h, w, out_h, out_w, lo, hi](Tape& t) {
        const Tensor& gy = t.grad(oid);
        Tensor& gx = t.grad(xid);
        for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t oy = 0; oy < out_h; ++oy) {
                const std::size_t y0 = lo(oy, h, out_h), y1 = hi(oy, h, out_h);
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    const std::size_t x0 = lo(ox, w, out_w), x1 = hi(ox, w, out_w);
                    const double g =
                        gy.at(ci, oy, ox) / static_cast<double>((y1 - y0) * (x1 - x0));
                    for (std::size_t iy = y0; iy < y1; ++iy) {
                        for (std::size_t ix = x0; ix < x1; ++ix) gx.at(ci, iy, ix) += g;
                    }
                }
            }
        }
    });
    return out;
}

}  // namespace capnet::ad
