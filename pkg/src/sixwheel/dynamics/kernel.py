"""Numba kernels for the rigid-body substep.

Everything here operates on flat numpy arrays owned by `world.World`.  One
`substep` call applies gravity, detects terrain contacts, assembles all
constraint rows, runs projected Gauss-Seidel with warm starting, and
integrates positions.  Row impulses persist in `r_lam` between calls.

Row layout (fixed at build time):
    hinge i      -> 7 slots: 3 ball, 2 align, drive (motor or brake), limit
    prismatic i  -> 7 slots: 3 angular, 2 perpendicular, lock, limit
    circuit i    -> 2 slots: engine (shaft speed), differential (mean speed)
    sphere body  -> 3 slots: normal + 2 friction
    box body     -> 8 corners x 3 slots

Compliant rows follow  J*v = -eta*g/(dt+tau) + bias  with diagonal
regularization  rho = eps/(dt*(dt+tau)).
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # degraded pure-python mode, slow but correct
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        def wrap(f):
            return f
        return wrap

ERR_OK = 0
ERR_NONFINITE = 1

BIG = 1.0e18


@njit(cache=True)
def _quat_to_mat(q, out):
    w, x, y, z = q[0], q[1], q[2], q[3]
    out[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[0, 1] = 2.0 * (x * y - w * z)
    out[0, 2] = 2.0 * (x * z + w * y)
    out[1, 0] = 2.0 * (x * y + w * z)
    out[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[1, 2] = 2.0 * (y * z - w * x)
    out[2, 0] = 2.0 * (x * z - w * y)
    out[2, 1] = 2.0 * (y * z + w * x)
    out[2, 2] = 1.0 - 2.0 * (x * x + y * y)


@njit(cache=True)
def _rotate(q, v, out):
    # out = R(q) * v without building the matrix
    w, x, y, z = q[0], q[1], q[2], q[3]
    tx = 2.0 * (y * v[2] - z * v[1])
    ty = 2.0 * (z * v[0] - x * v[2])
    tz = 2.0 * (x * v[1] - y * v[0])
    out[0] = v[0] + w * tx + (y * tz - z * ty)
    out[1] = v[1] + w * ty + (z * tx - x * tz)
    out[2] = v[2] + w * tz + (x * ty - y * tx)


@njit(cache=True)
def _quat_mul(a, b, out):
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _tri_height_normal(grid, cell, ox, oy, x, y, out_n):
    """Height and unit normal of the interpolated surface at (x, y).

    Coordinates are clamped to the grid; cells split along the lower-left to
    upper-right diagonal, matching terrain.height_at.
    """
    nrows, ncols = grid.shape
    fx = (x - ox) / cell
    fy = (y - oy) / cell
    if fx < 0.0:
        fx = 0.0
    if fy < 0.0:
        fy = 0.0
    if fx > ncols - 1.000001:
        fx = ncols - 1.000001
    if fy > nrows - 1.000001:
        fy = nrows - 1.000001
    i = int(fx)
    j = int(fy)
    if i > ncols - 2:
        i = ncols - 2
    if j > nrows - 2:
        j = nrows - 2
    u = fx - i
    v = fy - j
    h_ll = grid[j, i]
    h_lr = grid[j, i + 1]
    h_ul = grid[j + 1, i]
    h_ur = grid[j + 1, i + 1]
    if u >= v:
        h = h_ll + u * (h_lr - h_ll) + v * (h_ur - h_lr)
        # triangle (LL, LR, UR): normal from cross of edges
        ez1 = h_lr - h_ll
        ez2 = h_ur - h_lr
        # edges: (cell,0,ez1), (0,cell,ez2)
        nx = -ez1 * cell
        ny = -ez2 * cell
        nz = cell * cell
    else:
        h = h_ll + u * (h_ur - h_ul) + v * (h_ul - h_ll)
        # triangle (LL, UR, UL): edges (cell,0,ez1'), (0,cell,ez2')
        ez1 = h_ur - h_ul
        ez2 = h_ul - h_ll
        nx = -ez1 * cell
        ny = -ez2 * cell
        nz = cell * cell
    inv = 1.0 / np.sqrt(nx * nx + ny * ny + nz * nz)
    out_n[0] = nx * inv
    out_n[1] = ny * inv
    out_n[2] = nz * inv
    return h


@njit(cache=True)
def _closest_on_triangle(p, a, b, c, out):
    """Closest point on triangle abc to point p (Ericson, real-time CD)."""
    ab0 = b[0] - a[0]; ab1 = b[1] - a[1]; ab2 = b[2] - a[2]
    ac0 = c[0] - a[0]; ac1 = c[1] - a[1]; ac2 = c[2] - a[2]
    ap0 = p[0] - a[0]; ap1 = p[1] - a[1]; ap2 = p[2] - a[2]
    d1 = ab0 * ap0 + ab1 * ap1 + ab2 * ap2
    d2 = ac0 * ap0 + ac1 * ap1 + ac2 * ap2
    if d1 <= 0.0 and d2 <= 0.0:
        out[0] = a[0]; out[1] = a[1]; out[2] = a[2]
        return
    bp0 = p[0] - b[0]; bp1 = p[1] - b[1]; bp2 = p[2] - b[2]
    d3 = ab0 * bp0 + ab1 * bp1 + ab2 * bp2
    d4 = ac0 * bp0 + ac1 * bp1 + ac2 * bp2
    if d3 >= 0.0 and d4 <= d3:
        out[0] = b[0]; out[1] = b[1]; out[2] = b[2]
        return
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        out[0] = a[0] + t * ab0; out[1] = a[1] + t * ab1; out[2] = a[2] + t * ab2
        return
    cp0 = p[0] - c[0]; cp1 = p[1] - c[1]; cp2 = p[2] - c[2]
    d5 = ab0 * cp0 + ab1 * cp1 + ab2 * cp2
    d6 = ac0 * cp0 + ac1 * cp1 + ac2 * cp2
    if d6 >= 0.0 and d5 <= d6:
        out[0] = c[0]; out[1] = c[1]; out[2] = c[2]
        return
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        out[0] = a[0] + t * ac0; out[1] = a[1] + t * ac1; out[2] = a[2] + t * ac2
        return
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out[0] = b[0] + t * (c[0] - b[0])
        out[1] = b[1] + t * (c[1] - b[1])
        out[2] = b[2] + t * (c[2] - b[2])
        return
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    out[0] = a[0] + ab0 * v + ac0 * w
    out[1] = a[1] + ab1 * v + ac1 * w
    out[2] = a[2] + ab2 * v + ac2 * w


@njit(cache=True)
def _sphere_terrain(grid, cell, ox, oy, center, radius, out_point, out_normal):
    """Deepest sphere-surface penetration; returns depth (<=0 when clear)."""
    nrows, ncols = grid.shape
    i0 = int((center[0] - radius - ox) / cell)
    i1 = int((center[0] + radius - ox) / cell) + 1
    j0 = int((center[1] - radius - oy) / cell)
    j1 = int((center[1] + radius - oy) / cell) + 1
    if i0 < 0:
        i0 = 0
    if j0 < 0:
        j0 = 0
    if i1 > ncols - 2:
        i1 = ncols - 2
    if j1 > nrows - 2:
        j1 = nrows - 2
    best = -1.0
    pa = np.empty(3)
    pb = np.empty(3)
    pc = np.empty(3)
    cp = np.empty(3)
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            h00 = grid[j, i]
            h10 = grid[j, i + 1]
            h01 = grid[j + 1, i]
            h11 = grid[j + 1, i + 1]
            hmax = max(max(h00, h10), max(h01, h11))
            if hmax < center[2] - radius:
                continue
            x0 = ox + i * cell
            y0 = oy + j * cell
            for t in range(2):
                if t == 0:
                    pa[0] = x0; pa[1] = y0; pa[2] = h00
                    pb[0] = x0 + cell; pb[1] = y0; pb[2] = h10
                    pc[0] = x0 + cell; pc[1] = y0 + cell; pc[2] = h11
                else:
                    pa[0] = x0; pa[1] = y0; pa[2] = h00
                    pb[0] = x0 + cell; pb[1] = y0 + cell; pb[2] = h11
                    pc[0] = x0; pc[1] = y0 + cell; pc[2] = h01
                _closest_on_triangle(center, pa, pb, pc, cp)
                dx = center[0] - cp[0]
                dy = center[1] - cp[1]
                dz = center[2] - cp[2]
                dist = np.sqrt(dx * dx + dy * dy + dz * dz)
                depth = radius - dist
                if depth > best and dist > 1.0e-12:
                    best = depth
                    out_point[0] = cp[0]
                    out_point[1] = cp[1]
                    out_point[2] = cp[2]
                    out_normal[0] = dx / dist
                    out_normal[1] = dy / dist
                    out_normal[2] = dz / dist
    return best


@njit(cache=True)
def detect_contacts_kernel(pos, quat, shape_type, shape_size, collide,
                           grid, cell, ox, oy,
                           ct_body, ct_point, ct_normal, ct_depth, ct_slot):
    """Fill contact arrays; returns number of contacts.

    Slot numbering matches the row layout: sphere k uses slot k; box b corner
    c uses slot n_spheres + b*8 + c.  `ct_slot` records the slot of each
    emitted contact so warm-start impulses stay attached.
    """
    n = pos.shape[0]
    count = 0
    sphere_idx = 0
    box_idx = 0
    corner = np.empty(3)
    local = np.empty(3)
    nrm = np.empty(3)
    pnt = np.empty(3)
    n_spheres = 0
    for b in range(n):
        if shape_type[b] == 1:
            n_spheres += 1
    for b in range(n):
        if shape_type[b] == 1:
            if collide[b] != 0:
                depth = _sphere_terrain(grid, cell, ox, oy, pos[b],
                                        shape_size[b, 0], pnt, nrm)
                if depth > 0.0:
                    ct_body[count] = b
                    for k in range(3):
                        ct_point[count, k] = pnt[k]
                        ct_normal[count, k] = nrm[k]
                    ct_depth[count] = depth
                    ct_slot[count] = sphere_idx
                    count += 1
            sphere_idx += 1
        elif shape_type[b] == 2:
            if collide[b] != 0:
                for c in range(8):
                    local[0] = shape_size[b, 0] * (1.0 if c & 1 else -1.0)
                    local[1] = shape_size[b, 1] * (1.0 if c & 2 else -1.0)
                    local[2] = shape_size[b, 2] * (1.0 if c & 4 else -1.0)
                    _rotate(quat[b], local, corner)
                    cx = pos[b, 0] + corner[0]
                    cy = pos[b, 1] + corner[1]
                    cz = pos[b, 2] + corner[2]
                    h = _tri_height_normal(grid, cell, ox, oy, cx, cy, nrm)
                    if cz < h:
                        depth = (h - cz) * nrm[2]
                        ct_body[count] = b
                        ct_point[count, 0] = cx
                        ct_point[count, 1] = cy
                        ct_point[count, 2] = cz
                        for k in range(3):
                            ct_normal[count, k] = nrm[k]
                        ct_depth[count] = depth
                        ct_slot[count] = n_spheres + box_idx * 8 + c
                        count += 1
            box_idx += 1
    return count


@njit(cache=True)
def measure_kernel(pos, quat,
                   h_body, h_axis_a, h_ref_a, h_ref_b,
                   p_body, p_anchor_a, p_anchor_b, p_axis_a,
                   out_h_angle, out_h_speed, omega,
                   out_p_ext, out_p_rate, vel):
    """Hinge angles/speeds and prismatic extensions/rates."""
    tmp_a = np.empty(3)
    tmp_b = np.empty(3)
    axis = np.empty(3)
    crs = np.empty(3)
    for h in range(h_body.shape[0]):
        a = h_body[h, 0]
        b = h_body[h, 1]
        _rotate(quat[a], h_axis_a[h], axis)
        _rotate(quat[a], h_ref_a[h], tmp_a)
        _rotate(quat[b], h_ref_b[h], tmp_b)
        _cross(tmp_a, tmp_b, crs)
        out_h_angle[h] = np.arctan2(_dot(crs, axis), _dot(tmp_a, tmp_b))
        out_h_speed[h] = (axis[0] * (omega[b, 0] - omega[a, 0])
                          + axis[1] * (omega[b, 1] - omega[a, 1])
                          + axis[2] * (omega[b, 2] - omega[a, 2]))
    ra = np.empty(3)
    rb = np.empty(3)
    for p in range(p_body.shape[0]):
        a = p_body[p, 0]
        b = p_body[p, 1]
        _rotate(quat[a], p_axis_a[p], axis)
        _rotate(quat[a], p_anchor_a[p], ra)
        _rotate(quat[b], p_anchor_b[p], rb)
        dx = pos[b, 0] + rb[0] - pos[a, 0] - ra[0]
        dy = pos[b, 1] + rb[1] - pos[a, 1] - ra[1]
        dz = pos[b, 2] + rb[2] - pos[a, 2] - ra[2]
        out_p_ext[p] = axis[0] * dx + axis[1] * dy + axis[2] * dz
        # rate along axis (ignoring the small axis rotation term)
        vx = vel[b, 0] - vel[a, 0]
        vy = vel[b, 1] - vel[a, 1]
        vz = vel[b, 2] - vel[a, 2]
        out_p_rate[p] = axis[0] * vx + axis[1] * vy + axis[2] * vz


@njit(cache=True)
def substep(inv_mass, inv_inertia_b, pos, quat, vel, omega,
            shape_type, shape_size, collide,
            shaft_w, shaft_inv_inertia,
            h_body, h_anchor_a, h_anchor_b, h_axis_a, h_axis_b,
            h_perp1_a, h_perp2_a, h_ref_a, h_ref_b,
            h_motor_on, h_motor_target, h_motor_torque, h_limits, h_brake,
            h_eps, h_tau,
            p_body, p_anchor_a, p_anchor_b, p_axis_a, p_perp1_a, p_perp2_a,
            p_rot_ref, p_range, p_rest, p_eps, p_tau, p_force,
            pj_eps, pj_tau,
            t_shaft, t_hinges, t_target, t_torque,
            grid, cell, ox, oy, have_terrain,
            c_eps_sphere, c_eps_corner, c_mu, c_tau,
            dt, gravity, iters, eta,
            r_ba, r_bb, r_ja_lin, r_ja_ang, r_jb_lin, r_jb_ang,
            r_rhs, r_rho, r_lo, r_hi, r_diag, r_active, r_lam, r_norm_of,
            d_entries, d_axes,
            ct_body, ct_point, ct_normal, ct_depth, ct_slot, ct_count,
            iinv_w, diag_out):
    """One 60 Hz substep.  Returns ERR_OK or ERR_NONFINITE."""
    nb = pos.shape[0]
    nh = h_body.shape[0]
    npr = p_body.shape[0]
    nc = t_shaft.shape[0]
    n_spheres = 0
    n_boxes = 0
    for b in range(nb):
        if shape_type[b] == 1:
            n_spheres += 1
        elif shape_type[b] == 2:
            n_boxes += 1

    HROWS = nh * 7
    PROWS = npr * 7
    TROWS = nc * 2
    joint_rows = HROWS + PROWS
    trans0 = joint_rows
    contact0 = joint_rows + TROWS
    nrows = contact0 + (n_spheres + n_boxes * 8) * 3

    # --- gravity, world inverse inertia -----------------------------------
    R = np.empty((3, 3))
    for b in range(nb):
        if inv_mass[b] > 0.0:
            vel[b, 2] -= gravity * dt
        _quat_to_mat(quat[b], R)
        for r in range(3):
            for c in range(3):
                s = 0.0
                for k in range(3):
                    s += R[r, k] * inv_inertia_b[b, k] * R[c, k]
                iinv_w[b, r, c] = s

    # --- contacts ----------------------------------------------------------
    if have_terrain != 0:
        ncontacts = detect_contacts_kernel(pos, quat, shape_type, shape_size,
                                           collide, grid, cell, ox, oy,
                                           ct_body, ct_point, ct_normal,
                                           ct_depth, ct_slot)
    else:
        ncontacts = 0
    ct_count[0] = ncontacts

    # --- assemble rows ------------------------------------------------------
    for i in range(nrows):
        r_active[i] = 0
        r_norm_of[i] = -1

    ra = np.empty(3)
    rb = np.empty(3)
    axis = np.empty(3)
    axis_b = np.empty(3)
    perp = np.empty(3)
    tmp = np.empty(3)
    tmp2 = np.empty(3)
    d = np.empty(3)
    qt = np.empty(4)
    qrel = np.empty(4)
    qerr = np.empty(4)

    inv_dt_tau_h = 1.0
    for h in range(nh):
        a = h_body[h, 0]
        b = h_body[h, 1]
        base = h * 7
        _rotate(quat[a], h_anchor_a[h], ra)
        _rotate(quat[b], h_anchor_b[h], rb)
        _rotate(quat[a], h_axis_a[h], axis)
        _rotate(quat[b], h_axis_b[h], axis_b)
        # anchor separation (position error)
        for k in range(3):
            d[k] = pos[b, k] + rb[k] - pos[a, k] - ra[k]
        rho = h_eps[h] / (dt * (dt + h_tau[h]))
        bias_scale = eta / (dt + h_tau[h])
        # 3 ball rows along world axes
        for k in range(3):
            i = base + k
            r_ba[i] = a
            r_bb[i] = b
            for m in range(3):
                r_ja_lin[i, m] = 0.0
                r_jb_lin[i, m] = 0.0
            r_ja_lin[i, k] = -1.0
            r_jb_lin[i, k] = 1.0
            # J_ang_a = -(r_a x e_k), J_ang_b = (r_b x e_k)
            for m in range(3):
                tmp[m] = 0.0
            tmp[k] = 1.0
            _cross(ra, tmp, tmp2)
            for m in range(3):
                r_ja_ang[i, m] = -tmp2[m]
            _cross(rb, tmp, tmp2)
            for m in range(3):
                r_jb_ang[i, m] = tmp2[m]
            r_rhs[i] = -bias_scale * d[k]
            r_rho[i] = rho
            r_lo[i] = -BIG
            r_hi[i] = BIG
            r_active[i] = 1
        # 2 alignment rows: perp_a . axis_b = 0
        for k in range(2):
            i = base + 3 + k
            if k == 0:
                _rotate(quat[a], h_perp1_a[h], perp)
            else:
                _rotate(quat[a], h_perp2_a[h], perp)
            _cross(perp, axis_b, tmp)
            r_ba[i] = a
            r_bb[i] = b
            for m in range(3):
                r_ja_lin[i, m] = 0.0
                r_jb_lin[i, m] = 0.0
                r_ja_ang[i, m] = tmp[m]
                r_jb_ang[i, m] = -tmp[m]
            r_rhs[i] = -bias_scale * _dot(perp, axis_b)
            r_rho[i] = rho
            r_lo[i] = -BIG
            r_hi[i] = BIG
            r_active[i] = 1
        # drive row: motor (speed target) or brake (resistance)
        i = base + 5
        if h_motor_on[h] != 0 or h_brake[h] > 0.0:
            r_ba[i] = a
            r_bb[i] = b
            for m in range(3):
                r_ja_lin[i, m] = 0.0
                r_jb_lin[i, m] = 0.0
                r_ja_ang[i, m] = -axis[m]
                r_jb_ang[i, m] = axis[m]
            if h_motor_on[h] != 0:
                r_rhs[i] = h_motor_target[h]
                lim = h_motor_torque[h] * dt
            else:
                r_rhs[i] = 0.0
                lim = h_brake[h] * dt
            r_rho[i] = 0.0
            r_lo[i] = -lim
            r_hi[i] = lim
            r_active[i] = 1
        # angle limit row
        i = base + 6
        lo_ang = h_limits[h, 0]
        hi_ang = h_limits[h, 1]
        if lo_ang > -1.0e8 or hi_ang < 1.0e8:
            _rotate(quat[a], h_ref_a[h], tmp)
            _rotate(quat[b], h_ref_b[h], tmp2)
            _cross(tmp, tmp2, d)
            ang = np.arctan2(_dot(d, axis), _dot(tmp, tmp2))
            viol_lo = ang - lo_ang
            viol_hi = ang - hi_ang
            if viol_lo < 0.0 or viol_hi > 0.0:
                g = viol_lo if viol_lo < 0.0 else viol_hi
                r_ba[i] = a
                r_bb[i] = b
                for m in range(3):
                    r_ja_lin[i, m] = 0.0
                    r_jb_lin[i, m] = 0.0
                    r_ja_ang[i, m] = -axis[m]
                    r_jb_ang[i, m] = axis[m]
                r_rhs[i] = -bias_scale * g
                r_rho[i] = rho
                if viol_lo < 0.0:
                    r_lo[i] = 0.0
                    r_hi[i] = BIG
                else:
                    r_lo[i] = -BIG
                    r_hi[i] = 0.0
                r_active[i] = 1

    for p in range(npr):
        a = p_body[p, 0]
        b = p_body[p, 1]
        base = HROWS + p * 7
        _rotate(quat[a], p_anchor_a[p], ra)
        _rotate(quat[b], p_anchor_b[p], rb)
        _rotate(quat[a], p_axis_a[p], axis)
        for k in range(3):
            d[k] = pos[b, k] + rb[k] - pos[a, k] - ra[k]
        rho_j = pj_eps[p] / (dt * (dt + pj_tau[p]))
        bias_j = eta / (dt + pj_tau[p])
        # relative orientation error in world frame
        # qerr = q_a * (q_rel0 * q_b^-1)  -> rotation taking b to its target
        qt[0] = p_rot_ref[p, 0]
        qt[1] = p_rot_ref[p, 1]
        qt[2] = p_rot_ref[p, 2]
        qt[3] = p_rot_ref[p, 3]
        # q_b conjugate
        qrel[0] = quat[b, 0]
        qrel[1] = -quat[b, 1]
        qrel[2] = -quat[b, 2]
        qrel[3] = -quat[b, 3]
        _quat_mul(qt, qrel, qerr)
        _quat_mul(quat[a], qerr, qt)
        sgn = 1.0 if qt[0] >= 0.0 else -1.0
        # small-angle rotation vector of the correction (world frame)
        for k in range(3):
            tmp[k] = 2.0 * sgn * qt[1 + k]
        # 3 angular lock rows
        for k in range(3):
            i = base + k
            r_ba[i] = a
            r_bb[i] = b
            for m in range(3):
                r_ja_lin[i, m] = 0.0
                r_jb_lin[i, m] = 0.0
                r_ja_ang[i, m] = 0.0
                r_jb_ang[i, m] = 0.0
            r_ja_ang[i, k] = -1.0
            r_jb_ang[i, k] = 1.0
            r_rhs[i] = bias_j * tmp[k]
            r_rho[i] = rho_j
            r_lo[i] = -BIG
            r_hi[i] = BIG
            r_active[i] = 1
        # 2 perpendicular translation rows
        for k in range(2):
            i = base + 3 + k
            if k == 0:
                _rotate(quat[a], p_perp1_a[p], perp)
            else:
                _rotate(quat[a], p_perp2_a[p], perp)
            r_ba[i] = a
            r_bb[i] = b
            for m in range(3):
                r_ja_lin[i, m] = -perp[m]
                r_jb_lin[i, m] = perp[m]
            _cross(rb, perp, tmp2)
            for m in range(3):
                r_jb_ang[i, m] = tmp2[m]
            for m in range(3):
                tmp[m] = ra[m] + d[m]
            _cross(tmp, perp, tmp2)
            for m in range(3):
                r_ja_ang[i, m] = -tmp2[m]
            r_rhs[i] = -bias_j * _dot(perp, d)
            r_rho[i] = rho_j
            r_lo[i] = -BIG
            r_hi[i] = BIG
            r_active[i] = 1
        ext = _dot(axis, d)
        # lock row (compliant, force-limited)
        i = base + 5
        r_ba[i] = a
        r_bb[i] = b
        for m in range(3):
            r_ja_lin[i, m] = -axis[m]
            r_jb_lin[i, m] = axis[m]
        _cross(rb, axis, tmp2)
        for m in range(3):
            r_jb_ang[i, m] = tmp2[m]
        for m in range(3):
            tmp[m] = ra[m] + d[m]
        _cross(tmp, axis, tmp2)
        for m in range(3):
            r_ja_ang[i, m] = -tmp2[m]
        r_rhs[i] = -(eta / (dt + p_tau[p])) * (ext - p_rest[p])
        r_rho[i] = p_eps[p] / (dt * (dt + p_tau[p]))
        r_lo[i] = p_force[p, 0] * dt
        r_hi[i] = p_force[p, 1] * dt
        r_active[i] = 1
        # extension hard-limit row
        i = base + 6
        viol_lo = ext - p_range[p, 0]
        viol_hi = ext - p_range[p, 1]
        if viol_lo < 0.0 or viol_hi > 0.0:
            g = viol_lo if viol_lo < 0.0 else viol_hi
            r_ba[i] = a
            r_bb[i] = b
            for m in range(3):
                r_ja_lin[i, m] = -axis[m]
                r_jb_lin[i, m] = axis[m]
                r_ja_ang[i, m] = 0.0
                r_jb_ang[i, m] = 0.0
            _cross(rb, axis, tmp2)
            for m in range(3):
                r_jb_ang[i, m] = tmp2[m]
            for m in range(3):
                tmp[m] = ra[m] + d[m]
            _cross(tmp, axis, tmp2)
            for m in range(3):
                r_ja_ang[i, m] = -tmp2[m]
            r_rhs[i] = -bias_j * g
            r_rho[i] = rho_j
            if viol_lo < 0.0:
                r_lo[i] = 0.0
                r_hi[i] = BIG
            else:
                r_lo[i] = -BIG
                r_hi[i] = 0.0
            r_active[i] = 1

    # transmission rows: engine (shaft speed) then differential (mean speed)
    for c in range(nc):
        base = trans0 + c * 2
        i = base
        r_ba[i] = -1
        r_bb[i] = -1
        r_rhs[i] = t_target[c]
        r_rho[i] = 0.0
        r_lo[i] = -t_torque[c] * dt
        r_hi[i] = t_torque[c] * dt
        r_active[i] = 1
        i = base + 1
        r_ba[i] = -1
        r_bb[i] = -1
        r_rhs[i] = 0.0
        r_rho[i] = 0.0
        r_lo[i] = -BIG
        r_hi[i] = BIG
        r_active[i] = 1
        for k in range(3):
            hh = t_hinges[c, k]
            wheel = h_body[hh, 1]
            arm = h_body[hh, 0]
            d_entries[c, 2 * k] = wheel
            d_entries[c, 2 * k + 1] = arm
            _rotate(quat[arm], h_axis_a[hh], axis)
            for m in range(3):
                d_axes[c, k, m] = axis[m]

    # contact rows
    for cidx in range(ncontacts):
        b = ct_body[cidx]
        slot = ct_slot[cidx]
        base = contact0 + slot * 3
        is_sphere = shape_type[b] == 1
        eps_c = c_eps_sphere if is_sphere else c_eps_corner
        rho_c = eps_c / (dt * (dt + c_tau))
        bias_c = eta / (dt + c_tau)
        for k in range(3):
            rb[k] = ct_point[cidx, k] - pos[b, k]
            axis[k] = ct_normal[cidx, k]
        i = base
        r_ba[i] = -1
        r_bb[i] = b
        for m in range(3):
            r_ja_lin[i, m] = 0.0
            r_ja_ang[i, m] = 0.0
            r_jb_lin[i, m] = axis[m]
        _cross(rb, axis, tmp2)
        for m in range(3):
            r_jb_ang[i, m] = tmp2[m]
        r_rhs[i] = bias_c * ct_depth[cidx]
        r_rho[i] = rho_c
        r_lo[i] = 0.0
        r_hi[i] = BIG
        r_active[i] = 1
        # tangent basis
        if abs(axis[2]) < 0.9:
            tmp[0] = 0.0; tmp[1] = 0.0; tmp[2] = 1.0
        else:
            tmp[0] = 1.0; tmp[1] = 0.0; tmp[2] = 0.0
        _cross(axis, tmp, perp)
        inv = 1.0 / np.sqrt(_dot(perp, perp))
        for m in range(3):
            perp[m] *= inv
        _cross(axis, perp, tmp)
        for k in range(2):
            i = base + 1 + k
            tg = perp if k == 0 else tmp
            r_ba[i] = -1
            r_bb[i] = b
            for m in range(3):
                r_ja_lin[i, m] = 0.0
                r_ja_ang[i, m] = 0.0
                r_jb_lin[i, m] = tg[m]
            _cross(rb, tg, tmp2)
            for m in range(3):
                r_jb_ang[i, m] = tmp2[m]
            r_rhs[i] = 0.0
            r_rho[i] = 0.0
            r_lo[i] = -BIG
            r_hi[i] = BIG
            r_active[i] = 1
            r_norm_of[i] = base

    # reset impulses of inactive slots, compute diagonals
    for i in range(nrows):
        if r_active[i] == 0:
            r_lam[i] = 0.0
            continue
        if trans0 <= i < contact0:
            continue
        dsum = r_rho[i]
        a = r_ba[i]
        b = r_bb[i]
        if a >= 0:
            dsum += inv_mass[a] * _dot(r_ja_lin[i], r_ja_lin[i])
            for r in range(3):
                s = 0.0
                for cc in range(3):
                    s += iinv_w[a, r, cc] * r_ja_ang[i, cc]
                dsum += r_ja_ang[i, r] * s
        if b >= 0:
            dsum += inv_mass[b] * _dot(r_jb_lin[i], r_jb_lin[i])
            for r in range(3):
                s = 0.0
                for cc in range(3):
                    s += iinv_w[b, r, cc] * r_jb_ang[i, cc]
                dsum += r_jb_ang[i, r] * s
        r_diag[i] = dsum
    for c in range(nc):
        base = trans0 + c * 2
        s = t_shaft[c]
        r_diag[base] = shaft_inv_inertia[s] + r_rho[base]
        dsum = shaft_inv_inertia[s] + r_rho[base + 1]
        for k in range(3):
            wheel = d_entries[c, 2 * k]
            arm = d_entries[c, 2 * k + 1]
            for r in range(3):
                sw = 0.0
                sa = 0.0
                for cc in range(3):
                    sw += iinv_w[wheel, r, cc] * d_axes[c, k, cc]
                    sa += iinv_w[arm, r, cc] * d_axes[c, k, cc]
                dsum += (d_axes[c, k, r] * sw + d_axes[c, k, r] * sa) / 9.0
        r_diag[base + 1] = dsum

    # warm start: apply stored impulses
    for i in range(nrows):
        if r_active[i] == 0 or r_lam[i] == 0.0:
            continue
        if trans0 <= i < contact0:
            continue
        lam = r_lam[i]
        a = r_ba[i]
        b = r_bb[i]
        if a >= 0:
            for m in range(3):
                vel[a, m] += r_ja_lin[i, m] * inv_mass[a] * lam
            for r in range(3):
                s = 0.0
                for cc in range(3):
                    s += iinv_w[a, r, cc] * r_ja_ang[i, cc]
                omega[a, r] += s * lam
        if b >= 0:
            for m in range(3):
                vel[b, m] += r_jb_lin[i, m] * inv_mass[b] * lam
            for r in range(3):
                s = 0.0
                for cc in range(3):
                    s += iinv_w[b, r, cc] * r_jb_ang[i, cc]
                omega[b, r] += s * lam
    for c in range(nc):
        base = trans0 + c * 2
        s = t_shaft[c]
        shaft_w[s] += shaft_inv_inertia[s] * r_lam[base]
        lam = r_lam[base + 1]
        if lam != 0.0:
            shaft_w[s] += -1.0 * shaft_inv_inertia[s] * lam
            for k in range(3):
                wheel = d_entries[c, 2 * k]
                arm = d_entries[c, 2 * k + 1]
                for r in range(3):
                    sw = 0.0
                    sa = 0.0
                    for cc in range(3):
                        sw += iinv_w[wheel, r, cc] * d_axes[c, k, cc]
                        sa += iinv_w[arm, r, cc] * d_axes[c, k, cc]
                    omega[wheel, r] += sw * (lam / 3.0)
                    omega[arm, r] -= sa * (lam / 3.0)

    # --- projected Gauss-Seidel ---------------------------------------------
    for it in range(iters):
        for i in range(nrows):
            if r_active[i] == 0:
                continue
            if trans0 <= i < contact0:
                if (i - trans0) % 2 != 0:
                    continue  # handled jointly with the engine row
                c = (i - trans0) // 2
                s = t_shaft[c]
                ie = i
                idf = i + 1
                inv_is = shaft_inv_inertia[s]
                # residuals of the engine (shaft speed) and differential
                # (mean wheel speed) rows, solved as an exact 2x2 block so
                # the torque path through the light shaft converges
                jv_d = -shaft_w[s]
                for k in range(3):
                    wheel = d_entries[c, 2 * k]
                    arm = d_entries[c, 2 * k + 1]
                    for m in range(3):
                        jv_d += d_axes[c, k, m] * (omega[wheel, m]
                                                   - omega[arm, m]) / 3.0
                re = r_rhs[ie] - shaft_w[s] - r_rho[ie] * r_lam[ie]
                rd = r_rhs[idf] - jv_d - r_rho[idf] * r_lam[idf]
                a_ee = r_diag[ie]
                a_dd = r_diag[idf]
                a_ed = -inv_is
                det = a_ee * a_dd - a_ed * a_ed
                dle = (rd * (-a_ed) + re * a_dd) / det
                dld = (re * (-a_ed) + rd * a_ee) / det
                l0 = r_lam[ie]
                l1 = min(max(l0 + dle, r_lo[ie]), r_hi[ie])
                if l1 != l0 + dle:
                    # engine torque saturated: re-solve the differential alone
                    dle = l1 - l0
                    dld = (rd - a_ed * dle) / a_dd
                r_lam[ie] = l1
                r_lam[idf] += dld
                shaft_w[s] += inv_is * (dle - dld)
                for k in range(3):
                    wheel = d_entries[c, 2 * k]
                    arm = d_entries[c, 2 * k + 1]
                    for r in range(3):
                        sw = 0.0
                        sa = 0.0
                        for cc in range(3):
                            sw += iinv_w[wheel, r, cc] * d_axes[c, k, cc]
                            sa += iinv_w[arm, r, cc] * d_axes[c, k, cc]
                        omega[wheel, r] += sw * (dld / 3.0)
                        omega[arm, r] -= sa * (dld / 3.0)
                continue
            if r_norm_of[i] >= 0:
                lim = c_mu * r_lam[r_norm_of[i]]
                r_lo[i] = -lim
                r_hi[i] = lim
            a = r_ba[i]
            b = r_bb[i]
            jv = 0.0
            if a >= 0:
                jv += (r_ja_lin[i, 0] * vel[a, 0] + r_ja_lin[i, 1] * vel[a, 1]
                       + r_ja_lin[i, 2] * vel[a, 2]
                       + r_ja_ang[i, 0] * omega[a, 0]
                       + r_ja_ang[i, 1] * omega[a, 1]
                       + r_ja_ang[i, 2] * omega[a, 2])
            if b >= 0:
                jv += (r_jb_lin[i, 0] * vel[b, 0] + r_jb_lin[i, 1] * vel[b, 1]
                       + r_jb_lin[i, 2] * vel[b, 2]
                       + r_jb_ang[i, 0] * omega[b, 0]
                       + r_jb_ang[i, 1] * omega[b, 1]
                       + r_jb_ang[i, 2] * omega[b, 2])
            dl = (r_rhs[i] - jv - r_rho[i] * r_lam[i]) / r_diag[i]
            l0 = r_lam[i]
            l1 = min(max(l0 + dl, r_lo[i]), r_hi[i])
            dl = l1 - l0
            if dl == 0.0:
                r_lam[i] = l1
                continue
            r_lam[i] = l1
            if a >= 0:
                im = inv_mass[a]
                for m in range(3):
                    vel[a, m] += r_ja_lin[i, m] * im * dl
                for r in range(3):
                    s = 0.0
                    for cc in range(3):
                        s += iinv_w[a, r, cc] * r_ja_ang[i, cc]
                    omega[a, r] += s * dl
            if b >= 0:
                im = inv_mass[b]
                for m in range(3):
                    vel[b, m] += r_jb_lin[i, m] * im * dl
                for r in range(3):
                    s = 0.0
                    for cc in range(3):
                        s += iinv_w[b, r, cc] * r_jb_ang[i, cc]
                    omega[b, r] += s * dl

    # --- residual over interior rows ----------------------------------------
    max_resid = 0.0
    for i in range(nrows):
        if r_active[i] == 0:
            continue
        if r_lam[i] <= r_lo[i] + 1.0e-14 or r_lam[i] >= r_hi[i] - 1.0e-14:
            continue
        if trans0 <= i < contact0:
            c = (i - trans0) // 2
            s = t_shaft[c]
            if (i - trans0) % 2 == 0:
                jv = shaft_w[s]
            else:
                jv = -shaft_w[s]
                for k in range(3):
                    wheel = d_entries[c, 2 * k]
                    arm = d_entries[c, 2 * k + 1]
                    for m in range(3):
                        jv += d_axes[c, k, m] * (omega[wheel, m]
                                                 - omega[arm, m]) / 3.0
        else:
            a = r_ba[i]
            b = r_bb[i]
            jv = 0.0
            if a >= 0:
                for m in range(3):
                    jv += (r_ja_lin[i, m] * vel[a, m]
                           + r_ja_ang[i, m] * omega[a, m])
            if b >= 0:
                for m in range(3):
                    jv += (r_jb_lin[i, m] * vel[b, m]
                           + r_jb_ang[i, m] * omega[b, m])
        resid = abs(r_rhs[i] - jv - r_rho[i] * r_lam[i])
        if resid > max_resid:
            max_resid = resid
    diag_out[0] = max_resid

    # --- integrate -----------------------------------------------------------
    dq = np.empty(4)
    qn = np.empty(4)
    for b in range(nb):
        if inv_mass[b] == 0.0 and (omega[b, 0] == 0.0 and omega[b, 1] == 0.0
                                   and omega[b, 2] == 0.0):
            continue
        for m in range(3):
            pos[b, m] += vel[b, m] * dt
        wmag = np.sqrt(omega[b, 0] ** 2 + omega[b, 1] ** 2 + omega[b, 2] ** 2)
        if wmag > 1.0e-12:
            half = 0.5 * wmag * dt
            sh = np.sin(half) / wmag
            dq[0] = np.cos(half)
            dq[1] = omega[b, 0] * sh
            dq[2] = omega[b, 1] * sh
            dq[3] = omega[b, 2] * sh
            _quat_mul(dq, quat[b], qn)
            norm = np.sqrt(qn[0] ** 2 + qn[1] ** 2 + qn[2] ** 2 + qn[3] ** 2)
            for m in range(4):
                quat[b, m] = qn[m] / norm

    # --- divergence check -----------------------------------------------------
    for b in range(nb):
        for m in range(3):
            if not (np.isfinite(pos[b, m]) and np.isfinite(vel[b, m])
                    and np.isfinite(omega[b, m])):
                return ERR_NONFINITE
    return ERR_OK
