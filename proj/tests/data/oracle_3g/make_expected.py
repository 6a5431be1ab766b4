# Copyright Contributors to the splatlift project
# SPDX-License-Identifier: Apache-2.0
#
# Writes expected_uplift.json for this fixture with a plain numpy renderer
# (per-pixel loops, depth-sorted, 3-sigma cutoff, alpha clamp 0.99, blur 0.3).
# Run from this directory: python3 make_expected.py

import json
import struct

import numpy as np

raw = open('scene.ply','rb').read()
hdr_end = raw.index(b'end_header\n') + len(b'end_header\n')
hdr = raw[:hdr_end].decode().splitlines()
props = [l.split()[-1] for l in hdr if l.startswith('property')]
n = int([l for l in hdr if l.startswith('element vertex')][0].split()[-1])
data = np.frombuffer(raw[hdr_end:], dtype='<f4').reshape(n, len(props)).astype(np.float64)
P = {p: data[:, i] for i, p in enumerate(props)}
cams = json.load(open('cameras.json'))
def quat(q):
    w,x,y,z = q/np.linalg.norm(q)
    return np.array([[1-2*(y*y+z*z),2*(x*y-w*z),2*(x*z+w*y)],[2*(x*y+w*z),1-2*(x*x+z*z),2*(y*z-w*x)],[2*(x*z-w*y),2*(y*z+w*x),1-2*(x*x+y*y)]])
def read_splf(path):
    b = open(path,'rb').read()
    # magic, version, rank, u64 dims, dtype byte: magic, version, rank, dims (u64), dtype byte
    rank = struct.unpack('<I', b[8:12])[0]
    dims = struct.unpack('<%dQ' % rank, b[12:12+8*rank])
    off = 12 + 8*rank + 1
    return np.frombuffer(b[off:], dtype='<f4').reshape(dims).astype(np.float64)
num = np.zeros((n, 2)); beta = np.zeros(n)
for c in cams:
    F = read_splf('features/%s.splf' % c['id'])
    M = np.array(c['world_to_camera']).reshape(4,4)
    Rw, tw = M[:3,:3], M[:3,3]
    gs = []
    for i in range(n):
        mu = np.array([P['x'][i],P['y'][i],P['z'][i]])
        S = np.diag(np.exp([P['scale_0'][i],P['scale_1'][i],P['scale_2'][i]]))
        R = quat(np.array([P['rot_0'][i],P['rot_1'][i],P['rot_2'][i],P['rot_3'][i]]))
        Sig = R@S@S@R.T
        t = Rw@mu + tw
        J = np.array([[c['fx']/t[2],0,-c['fx']*t[0]/t[2]**2],[0,c['fy']/t[2],-c['fy']*t[1]/t[2]**2]])
        S2 = J@Rw@Sig@Rw.T@J.T + 0.3*np.eye(2)
        m2 = np.array([c['fx']*t[0]/t[2]+c['cx'], c['fy']*t[1]/t[2]+c['cy']])
        op = 1/(1+np.exp(-P['opacity'][i]))
        gs.append((t[2], i, m2, np.linalg.inv(S2), op))
    gs.sort()
    for py in range(c['height']):
        for px in range(c['width']):
            T = 1.0
            for z, i, m2, Q, op in gs:
                d = np.array([px+0.5, py+0.5]) - m2
                pw = d@Q@d
                if pw > 9.0: continue
                a = min(0.99, op*np.exp(-0.5*pw))
                if a < 1/255: continue
                if T*(1-a) < 1e-4: break
                w = T*a
                num[i] += w*F[py,px]; beta[i] += w
                T *= 1-a
with open('expected_uplift.json', 'w') as out:
    json.dump({'beta': beta.tolist(), 'features': (num / beta[:, None]).tolist()}, out, indent=2)
    out.write('\n')
